//! Compressed-row sparse matrices and direct solvers backed by faer.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Duplicate entries are summed in input order, so the result is
    /// reproducible for a fixed triplet sequence. Explicit zeros are kept.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut count = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows {
                return Err(Error::IndexOutOfRange { index: i, len: nrows });
            }
            if j >= ncols {
                return Err(Error::IndexOutOfRange { index: j, len: ncols });
            }
            count[i + 1] += 1;
        }
        for i in 0..nrows {
            count[i + 1] += count[i];
        }
        // bucket by row, preserving input order
        let mut next = count.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(i, j, v) in triplets {
            bucket[next[i]] = (j, v);
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for i in 0..nrows {
            let row = &mut bucket[count[i]..count[i + 1]];
            row.sort_by_key(|&(j, _)| j); // stable
            for &(j, v) in row.iter() {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        })
    }

    /// Wraps compressed-row arrays; column indices must be strictly increasing per row.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 || row_ptr[0] != 0 || row_ptr[nrows] != col_idx.len() {
            return Err(Error::InvalidParameter("malformed row pointer".into()));
        }
        if values.len() != col_idx.len() {
            return Err(Error::DimensionMismatch {
                expected: col_idx.len(),
                actual: values.len(),
            });
        }
        for i in 0..nrows {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.last().is_some_and(|&j| j >= ncols) {
                return Err(Error::InvalidParameter(format!(
                    "row {i}: unsorted or out-of-range columns"
                )));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Sets the symmetry flag after checking `|a_ij - a_ji| <= tol * max|a|`.
    pub fn mark_symmetric(&mut self, tol: f64) -> bool {
        self.symmetric = self.nrows == self.ncols && self.symmetry_defect() <= tol * self.max_abs();
        self.symmetric
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let t = self.transpose();
        self.add_scaled(1.0, &t, -1.0).max_abs()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `A^t x`.
    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut count = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            count[j + 1] += 1;
        }
        for j in 0..self.ncols {
            count[j + 1] += count[j];
        }
        let mut next = count.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                col_idx[next[j]] = i;
                values[next[j]] = v;
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr: count,
            col_idx,
            values,
            symmetric: self.symmetric,
        }
    }

    /// Sparse product `self * other` (row-wise Gustavson).
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                actual: other.nrows,
            });
        }
        let n = other.ncols;
        let mut marker = vec![usize::MAX; n];
        let mut acc = vec![0.0; n];
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut cols_in_row: Vec<usize> = Vec::new();
        row_ptr.push(0);
        for i in 0..self.nrows {
            cols_in_row.clear();
            let (ac, av) = self.row(i);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k);
                for (&j, &b) in bc.iter().zip(bv) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        cols_in_row.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols_in_row.sort_unstable();
            for &j in &cols_in_row {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: n,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        })
    }

    /// `a * self + b * other` on the union pattern.
    pub fn add_scaled(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        row_ptr.push(0);
        for i in 0..self.nrows {
            let (c1, v1) = self.row(i);
            let (c2, v2) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < c1.len() || q < c2.len() {
                let j1 = c1.get(p).copied().unwrap_or(usize::MAX);
                let j2 = c2.get(q).copied().unwrap_or(usize::MAX);
                if j1 == j2 {
                    col_idx.push(j1);
                    values.push(a * v1[p] + b * v2[q]);
                    p += 1;
                    q += 1;
                } else if j1 < j2 {
                    col_idx.push(j1);
                    values.push(a * v1[p]);
                    p += 1;
                } else {
                    col_idx.push(j2);
                    values.push(b * v2[q]);
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
            symmetric: self.symmetric && other.symmetric,
        }
    }

    /// Row-major dense copy; meant for small matrices in tests and oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    /// Coordinate text dump, one `row col value` line per stored entry.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "% {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(w, "{i} {j} {v:.17e}")?;
            }
        }
        Ok(())
    }

    fn check_square(&self) -> Result<()> {
        if self.nrows != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                actual: self.ncols,
            });
        }
        Ok(())
    }
}

/// The CSR arrays of `m` read as CSC describe `m^t`.
fn csc_of_transpose(m: &SparseMatrix) -> SymbolicSparseColMatRef<'_, usize> {
    SymbolicSparseColMatRef::new_checked(m.ncols, m.nrows, &m.row_ptr, None, &m.col_idx)
}

fn relative_residual(m: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    if x.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let r = m.matvec(x);
    let num = r.iter().zip(b).fold(0.0f64, |acc, (ri, bi)| acc.max((ri - bi).abs()));
    let scale = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
        + m.max_abs() * x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        0.0
    } else {
        num / scale
    }
}

fn solve_vec<S: Solve<f64>>(s: &S, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    let n = x.len();
    s.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
    x
}

/// Sparse LU with partial pivoting for general square systems.
pub struct LuSolver {
    matrix: SparseMatrix,
    lu: Lu<usize, f64>,
}

impl LuSolver {
    pub fn new(m: &SparseMatrix) -> Result<Self> {
        m.check_square()?;
        let t = m.transpose();
        let sym = csc_of_transpose(&t);
        let symbolic = SymbolicLu::try_new(sym).map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic, SparseColMatRef::new(sym, &t.values))
            .map_err(|e| Error::LinearSolver(format!("LU factorization failed: {e:?}")))?;
        Ok(Self { matrix: m.clone(), lu })
    }

    /// Solves and checks the relative residual against `1e-8`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.matrix.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.nrows,
                actual: b.len(),
            });
        }
        let x = solve_vec(&self.lu, b);
        let res = relative_residual(&self.matrix, &x, b);
        if !res.is_finite() || res > 1e-8 {
            return Err(Error::LinearSolver(format!(
                "relative residual {res:e} after LU solve; system is singular or ill-conditioned"
            )));
        }
        Ok(x)
    }
}

/// Sparse Cholesky for SPD systems; only the lower triangle is read.
pub struct CholeskySolver {
    llt: Llt<usize, f64>,
    n: usize,
}

impl CholeskySolver {
    pub fn new(m: &SparseMatrix) -> Result<Self> {
        m.check_square()?;
        // lower triangle of m^t equals upper of m; for symmetric input either works
        let sym = csc_of_transpose(m);
        let llt = SparseColMatRef::new(sym, &m.values)
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::LinearSolver(format!("Cholesky failed, matrix not SPD: {e:?}")))?;
        Ok(Self { llt, n: m.nrows })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: b.len(),
            });
        }
        Ok(solve_vec(&self.llt, b))
    }
}

/// Solves `B(I,I) y_I = b_I - B(I,F) y_F` for a fixed symmetric pattern and
/// changing index sets `F`. Fixed rows and columns are replaced by identity
/// rows in a full-size copy so the symbolic factorization is reused.
pub struct FixedIndexSolver {
    matrix: SparseMatrix,
    symbolic: SymbolicLlt<usize>,
    work: Vec<f64>,
}

impl FixedIndexSolver {
    pub fn new(matrix: &SparseMatrix) -> Result<Self> {
        matrix.check_square()?;
        for i in 0..matrix.nrows {
            if matrix.row(i).0.binary_search(&i).is_err() {
                return Err(Error::LinearSolver(format!("missing diagonal entry in row {i}")));
            }
        }
        let symbolic = SymbolicLlt::try_new(csc_of_transpose(matrix), Side::Lower)
            .map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
        Ok(Self {
            matrix: matrix.clone(),
            symbolic,
            work: vec![0.0; matrix.nnz()],
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Returns the full vector `y` with `y_F = fixed_values_F` and `y_I`
    /// solving the reduced system.
    pub fn solve(&mut self, fixed: &[bool], fixed_values: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        let m = &self.matrix;
        let n = m.nrows;
        for len in [fixed.len(), fixed_values.len(), b.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let r = m.row_ptr[i]..m.row_ptr[i + 1];
            if fixed[i] {
                for k in r {
                    self.work[k] = if m.col_idx[k] == i { 1.0 } else { 0.0 };
                }
                rhs[i] = fixed_values[i];
            } else {
                let mut s = b[i];
                for k in r {
                    let j = m.col_idx[k];
                    if fixed[j] {
                        s -= m.values[k] * fixed_values[j];
                        self.work[k] = 0.0;
                    } else {
                        self.work[k] = m.values[k];
                    }
                }
                rhs[i] = s;
            }
        }
        let sym = csc_of_transpose(m);
        let llt = Llt::try_new_with_symbolic(
            self.symbolic.clone(),
            SparseColMatRef::new(sym, &self.work),
            Side::Lower,
        )
        .map_err(|e| Error::LinearSolver(format!("reduced system not SPD: {e:?}")))?;
        let mut y = solve_vec(&llt, &rhs);
        for i in 0..n {
            if fixed[i] {
                y[i] = fixed_values[i];
            }
        }
        Ok(y)
    }
}
