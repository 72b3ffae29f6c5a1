//! Mass, interior penalty, advection-reaction and boundary-data assembly for
//! the DG space, and the composite operators used by the optimization layer.

use std::fmt;
use std::sync::Arc;

use crate::dg::{load_vector, local_mass_inverse_apply, trace_locals, DgFunction};
use crate::error::{Error, Result};
use crate::mesh::{classify_boundary_edges, dot, BoundaryPartition, Point, Triangulation};
use crate::quadrature::{gauss3, gauss5, TRIANGLE_DEGREE4, TRIANGLE_DEGREE6};
use crate::sparse::SparseMatrix;

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Advection field `zeta` (with its divergence) and reaction `gamma`.
#[derive(Clone)]
pub struct Coefficients {
    zeta: VectorField,
    div_zeta: ScalarField,
    gamma: ScalarField,
    constant: Option<(Point, f64)>,
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constant {
            Some((z, g)) => write!(f, "Coefficients {{ zeta: {z:?}, gamma: {g} }}"),
            None => write!(f, "Coefficients {{ variable }}"),
        }
    }
}

impl Coefficients {
    pub fn constant(zeta: Point, gamma: f64) -> Self {
        Self {
            zeta: Arc::new(move |_| zeta),
            div_zeta: Arc::new(|_| 0.0),
            gamma: Arc::new(move |_| gamma),
            constant: Some((zeta, gamma)),
        }
    }

    pub fn new(zeta: VectorField, div_zeta: ScalarField, gamma: ScalarField) -> Self {
        Self {
            zeta,
            div_zeta,
            gamma,
            constant: None,
        }
    }

    pub fn zeta(&self, p: Point) -> Point {
        (self.zeta)(p)
    }

    pub fn div_zeta(&self, p: Point) -> f64 {
        (self.div_zeta)(p)
    }

    pub fn gamma(&self, p: Point) -> f64 {
        (self.gamma)(p)
    }

    /// `(zeta, gamma)` when both are constant.
    pub fn as_constant(&self) -> Option<(Point, f64)> {
        self.constant
    }

    /// Checks `gamma >= 0` and `gamma - div(zeta) / 2 > 0` at the volume
    /// quadrature points; returns the smallest value of the latter.
    pub fn check(&self, mesh: &Triangulation) -> Result<f64> {
        let mut gamma0 = f64::INFINITY;
        for t in 0..mesh.num_elements() {
            for q in &TRIANGLE_DEGREE4 {
                let p = mesh.map_point(t, q.bary);
                let g = self.gamma(p);
                if g < 0.0 {
                    return Err(Error::Coefficients(format!("gamma = {g} < 0 at {p:?}")));
                }
                gamma0 = gamma0.min(g - 0.5 * self.div_zeta(p));
            }
        }
        if gamma0 <= 0.0 {
            return Err(Error::Coefficients(format!(
                "gamma - div(zeta)/2 has minimum {gamma0} <= 0"
            )));
        }
        Ok(gamma0)
    }
}

/// One symmetric positive definite 3x3 block per element.
#[derive(Debug, Clone)]
pub struct BlockDiagonalMass {
    blocks: Vec<[[f64; 3]; 3]>,
    areas: Vec<f64>,
}

impl BlockDiagonalMass {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, t: usize) -> [[f64; 3]; 3] {
        self.blocks[t]
    }

    pub fn dim(&self) -> usize {
        3 * self.blocks.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let mut y = vec![0.0; x.len()];
        for (t, b) in self.blocks.iter().enumerate() {
            for i in 0..3 {
                y[3 * t + i] = (0..3).map(|j| b[i][j] * x[3 * t + j]).sum();
            }
        }
        y
    }

    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let mut y = vec![0.0; x.len()];
        for (t, &area) in self.areas.iter().enumerate() {
            let r = local_mass_inverse_apply(area, [x[3 * t], x[3 * t + 1], x[3 * t + 2]]);
            y[3 * t..3 * t + 3].copy_from_slice(&r);
        }
        y
    }

    /// `x^t M y`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.apply(x).iter().zip(y).map(|(a, b)| a * b).sum()
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        let n = self.dim();
        let row_ptr = (0..=n).map(|i| 3 * i).collect();
        let col_idx = (0..n).flat_map(|i| {
            let t = i / 3;
            [3 * t, 3 * t + 1, 3 * t + 2]
        });
        let values = (0..n).flat_map(|i| self.blocks[i / 3][i % 3]);
        let mut m =
            SparseMatrix::from_csr(n, n, row_ptr, col_idx.collect(), values.collect()).expect("block-diagonal pattern");
        m.mark_symmetric(0.0);
        m
    }
}

pub fn assemble_mass(mesh: &Triangulation) -> Result<BlockDiagonalMass> {
    let mut blocks = Vec::with_capacity(mesh.num_elements());
    let mut areas = Vec::with_capacity(mesh.num_elements());
    for t in 0..mesh.num_elements() {
        let area = mesh.area(t);
        if !(area > 0.0) {
            return Err(Error::DegenerateElement { element: t, area });
        }
        let mut b = [[area / 12.0; 3]; 3];
        for (i, row) in b.iter_mut().enumerate() {
            row[i] = area / 6.0;
        }
        blocks.push(b);
        areas.push(area);
    }
    Ok(BlockDiagonalMass { blocks, areas })
}

/// Accumulates 3x3 element-pair blocks into a CSR matrix whose pattern is
/// every element coupled with itself and its edge neighbours.
struct BlockBuilder {
    neighbours: Vec<Vec<usize>>,
    base: Vec<usize>,
    values: Vec<f64>,
}

impl BlockBuilder {
    fn new(mesh: &Triangulation) -> Self {
        let mut neighbours: Vec<Vec<usize>> = (0..mesh.num_elements()).map(|t| vec![t]).collect();
        for e in mesh.edges() {
            if let Some(m) = e.minus {
                neighbours[e.plus.element].push(m.element);
                neighbours[m.element].push(e.plus.element);
            }
        }
        let mut base = Vec::with_capacity(neighbours.len() + 1);
        let mut acc = 0;
        for nb in neighbours.iter_mut() {
            nb.sort_unstable();
            base.push(acc);
            acc += 9 * nb.len();
        }
        base.push(acc);
        Self {
            neighbours,
            base,
            values: vec![0.0; acc],
        }
    }

    #[inline]
    fn add(&mut self, row_elem: usize, col_elem: usize, i: usize, j: usize, v: f64) {
        let nb = &self.neighbours[row_elem];
        let pos = nb.iter().position(|&c| c == col_elem).expect("coupled elements");
        let k = nb.len();
        self.values[self.base[row_elem] + i * 3 * k + 3 * pos + j] += v;
    }

    fn finish(self) -> SparseMatrix {
        let n = 3 * self.neighbours.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(self.values.len());
        row_ptr.push(0);
        for nb in &self.neighbours {
            for _ in 0..3 {
                for &c in nb {
                    col_idx.extend([3 * c, 3 * c + 1, 3 * c + 2]);
                }
                row_ptr.push(col_idx.len());
            }
        }
        SparseMatrix::from_csr(n, n, row_ptr, col_idx, self.values).expect("sorted block pattern")
    }
}

/// For edge `e`: per side (element, local indices at edge start/end, sign of the jump).
fn edge_sides(mesh: &Triangulation, e: usize) -> Vec<(usize, [usize; 2], f64)> {
    let edge = &mesh.edges()[e];
    let (tp, lp) = trace_locals(edge, true);
    let mut sides = vec![(tp, lp, 1.0)];
    if edge.minus.is_some() {
        let (tm, lm) = trace_locals(edge, false);
        sides.push((tm, lm, -1.0));
    }
    sides
}

/// Basis traces on an edge at parameter `s`: the full local vector of element values.
#[inline]
fn trace_basis(locals: [usize; 2], s: f64) -> [f64; 3] {
    let mut phi = [0.0; 3];
    phi[locals[0]] = 1.0 - s;
    phi[locals[1]] = s;
    phi
}

/// Symmetric interior penalty form; row `i`, column `j` holds `a(phi_j, phi_i)`.
pub fn assemble_sip(mesh: &Triangulation, sigma: f64) -> Result<SparseMatrix> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "penalty sigma must be positive, got {sigma}"
        )));
    }
    let mut b = BlockBuilder::new(mesh);
    for t in 0..mesh.num_elements() {
        let g = mesh.basis_gradients(t);
        let area = mesh.area(t);
        for i in 0..3 {
            for j in 0..3 {
                b.add(t, t, i, j, area * dot(g[i], g[j]));
            }
        }
    }
    let gauss = gauss3();
    for (e, edge) in mesh.edges().iter().enumerate() {
        let sides = edge_sides(mesh, e);
        let kappa = if edge.is_boundary() { 1.0 } else { 0.5 };
        let h = edge.length;
        // normal derivative of each basis function, constant per element
        let dn: Vec<[f64; 3]> = sides
            .iter()
            .map(|&(t, _, _)| mesh.basis_gradients(t).map(|g| dot(g, edge.normal)))
            .collect();
        for &(s_param, w) in &gauss {
            let wl = w * h;
            let phi: Vec<[f64; 3]> = sides.iter().map(|&(_, l, _)| trace_basis(l, s_param)).collect();
            for (a, &(ta, _, ea)) in sides.iter().enumerate() {
                for (c, &(tc, _, ec)) in sides.iter().enumerate() {
                    // test function on side a, trial on side c
                    for i in 0..3 {
                        for j in 0..3 {
                            let jump_v = ea * phi[a][i];
                            let jump_w = ec * phi[c][j];
                            let v =
                                -kappa * dn[c][j] * jump_v - kappa * dn[a][i] * jump_w + sigma / h * jump_w * jump_v;
                            if v != 0.0 {
                                b.add(ta, tc, i, j, wl * v);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut m = b.finish();
    m.mark_symmetric(1e-12);
    Ok(m)
}

/// Unstabilized advection-reaction form: volume `(zeta . grad w + gamma w, v)`
/// minus `(n . zeta [w], {v})` over interior and inflow boundary edges.
pub fn assemble_ar(mesh: &Triangulation, coeffs: &Coefficients) -> Result<SparseMatrix> {
    coeffs.check(mesh)?;
    let inflow = classify_boundary_edges(mesh, &|p| coeffs.zeta(p));
    Ok(assemble_ar_unchecked(mesh, coeffs, &inflow))
}

fn assemble_ar_unchecked(mesh: &Triangulation, coeffs: &Coefficients, inflow: &BoundaryPartition) -> SparseMatrix {
    let mut b = BlockBuilder::new(mesh);
    for t in 0..mesh.num_elements() {
        let g = mesh.basis_gradients(t);
        let area = mesh.area(t);
        let mut block = [[0.0; 3]; 3];
        for q in &TRIANGLE_DEGREE4 {
            let p = mesh.map_point(t, q.bary);
            let z = coeffs.zeta(p);
            let gam = coeffs.gamma(p);
            for (i, row) in block.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += q.weight * area * (dot(z, g[j]) + gam * q.bary[j]) * q.bary[i];
                }
            }
        }
        for (i, row) in block.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                b.add(t, t, i, j, v);
            }
        }
    }
    let gauss = gauss3();
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge.is_boundary() && !inflow.is_inflow(e) {
            continue;
        }
        let sides = edge_sides(mesh, e);
        let kappa = if edge.is_boundary() { 1.0 } else { 0.5 };
        for &(s_param, w) in &gauss {
            let zn = dot(coeffs.zeta(mesh.edge_point(e, s_param)), edge.normal);
            if zn == 0.0 {
                continue;
            }
            let wl = w * edge.length;
            let phi: Vec<[f64; 3]> = sides.iter().map(|&(_, l, _)| trace_basis(l, s_param)).collect();
            for (a, &(ta, _, _)) in sides.iter().enumerate() {
                for (c, &(tc, _, ec)) in sides.iter().enumerate() {
                    for i in 0..3 {
                        for j in 0..3 {
                            let v = -zn * ec * phi[c][j] * kappa * phi[a][i];
                            if v != 0.0 {
                                b.add(ta, tc, i, j, wl * v);
                            }
                        }
                    }
                }
            }
        }
    }
    b.finish()
}

/// Weak Dirichlet data: `(g, n . grad v - sigma / h_e v)` over boundary edges
/// plus `(n . zeta g, v)` over inflow edges. Added to `A y` in `L_{h,g}`.
pub fn assemble_boundary_data(
    mesh: &Triangulation,
    g: &dyn Fn(Point) -> f64,
    sigma: f64,
    coeffs: &Coefficients,
) -> Vec<f64> {
    let inflow = classify_boundary_edges(mesh, &|p| coeffs.zeta(p));
    boundary_data_with(mesh, g, sigma, coeffs, &inflow)
}

fn boundary_data_with(
    mesh: &Triangulation,
    g: &dyn Fn(Point) -> f64,
    sigma: f64,
    coeffs: &Coefficients,
    inflow: &BoundaryPartition,
) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_dofs()];
    let gauss = gauss5();
    for (e, edge) in mesh.edges().iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        let (t, locals) = trace_locals(edge, true);
        let dn = mesh.basis_gradients(t).map(|gr| dot(gr, edge.normal));
        let is_in = inflow.is_inflow(e);
        for &(s, w) in &gauss {
            let p = mesh.edge_point(e, s);
            let gv = g(p);
            if gv == 0.0 {
                continue;
            }
            let phi = trace_basis(locals, s);
            let zn = if is_in { dot(coeffs.zeta(p), edge.normal) } else { 0.0 };
            for i in 0..3 {
                out[3 * t + i] += w * edge.length * gv * (dn[i] - sigma / edge.length * phi[i] + zn * phi[i]);
            }
        }
    }
    out
}

/// `M^{-1} (A y + gvec)`.
pub fn apply_lhg(y: &[f64], a: &SparseMatrix, m: &BlockDiagonalMass, gvec: &[f64]) -> Result<Vec<f64>> {
    if y.len() != a.ncols() || gvec.len() != a.nrows() || m.dim() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: y.len().max(gvec.len()),
        });
    }
    let mut r = a.matvec(y);
    r.iter_mut().zip(gvec).for_each(|(x, g)| *x += g);
    Ok(m.apply_inverse(&r))
}

/// `M^{-1} A` keeping the block pattern of `A` (rows of one element share columns).
fn mass_inverse_times(a: &SparseMatrix, m: &BlockDiagonalMass) -> Result<SparseMatrix> {
    let rp = a.row_ptr().to_vec();
    let shared = (0..m.num_blocks()).all(|t| {
        let r = |i: usize| &a.col_idx()[rp[i]..rp[i + 1]];
        r(3 * t) == r(3 * t + 1) && r(3 * t) == r(3 * t + 2)
    });
    if !shared {
        let n = m.dim();
        let mut inv = Vec::with_capacity(3 * n);
        for i in 0..n {
            let t = i / 3;
            for j in 0..3 {
                let mut e = [0.0; 3];
                e[j] = 1.0;
                inv.push((i, 3 * t + j, local_mass_inverse_apply(m.areas[t], e)[i % 3]));
            }
        }
        return SparseMatrix::from_triplets(n, n, &inv)?.matmul(a);
    }
    let mut c = a.clone();
    let vals = c.values_mut();
    for (t, &area) in m.areas.iter().enumerate() {
        let len = rp[3 * t + 1] - rp[3 * t];
        let (r0, r1, r2) = (rp[3 * t], rp[3 * t + 1], rp[3 * t + 2]);
        for k in 0..len {
            let x = local_mass_inverse_apply(area, [vals[r0 + k], vals[r1 + k], vals[r2 + k]]);
            vals[r0 + k] = x[0];
            vals[r1 + k] = x[1];
            vals[r2 + k] = x[2];
        }
    }
    Ok(c)
}

/// `B = beta A^t M^{-1} A + M`, symmetrized.
pub fn assemble_bh(a: &SparseMatrix, m: &BlockDiagonalMass, beta: f64) -> Result<SparseMatrix> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    assemble_bh_unchecked(a, m, beta)
}

pub(crate) fn assemble_bh_unchecked(a: &SparseMatrix, m: &BlockDiagonalMass, beta: f64) -> Result<SparseMatrix> {
    if a.nrows() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            actual: a.nrows(),
        });
    }
    let c = mass_inverse_times(a, m)?;
    let atc = a.transpose().matmul(&c)?;
    let b = atc.add_scaled(beta, &m.to_sparse(), 1.0);
    let bt = b.transpose();
    let mut sym = b.add_scaled(0.5, &bt, 0.5);
    sym.mark_symmetric(0.0);
    Ok(sym)
}

/// `-beta A^t M^{-1} gvec + yd_load`, where `yd_load = M y_d`.
pub fn assemble_rhs_qp_load(
    a: &SparseMatrix,
    m: &BlockDiagonalMass,
    gvec: &[f64],
    yd_load: &[f64],
    beta: f64,
) -> Result<Vec<f64>> {
    for len in [gvec.len(), yd_load.len(), a.nrows()] {
        if len != m.dim() {
            return Err(Error::DimensionMismatch {
                expected: m.dim(),
                actual: len,
            });
        }
    }
    let t = a.transpose_matvec(&m.apply_inverse(gvec));
    Ok(yd_load.iter().zip(t).map(|(y, s)| y - beta * s).collect())
}

pub fn assemble_rhs_qp(
    m: &BlockDiagonalMass,
    a: &SparseMatrix,
    gvec: &[f64],
    y_d: &DgFunction,
    beta: f64,
) -> Result<Vec<f64>> {
    assemble_rhs_qp_load(a, m, gvec, &m.apply(y_d.values()), beta)
}

/// All mesh-level operators of the state equation.
#[derive(Debug, Clone)]
pub struct Discretization {
    mesh: Arc<Triangulation>,
    coeffs: Coefficients,
    sigma: f64,
    inflow: BoundaryPartition,
    mass: BlockDiagonalMass,
    sip: SparseMatrix,
    ar: SparseMatrix,
    a: SparseMatrix,
    gvec: Vec<f64>,
}

impl Discretization {
    pub fn new(mesh: Arc<Triangulation>, coeffs: Coefficients, sigma: f64, g: &dyn Fn(Point) -> f64) -> Result<Self> {
        let mass = assemble_mass(&mesh)?;
        let sip = assemble_sip(&mesh, sigma)?;
        coeffs.check(&mesh)?;
        let inflow = classify_boundary_edges(&mesh, &|p| coeffs.zeta(p));
        let ar = assemble_ar_unchecked(&mesh, &coeffs, &inflow);
        let a = sip.add_scaled(1.0, &ar, 1.0);
        let gvec = boundary_data_with(&mesh, g, sigma, &coeffs, &inflow);
        Ok(Self {
            mesh,
            coeffs,
            sigma,
            inflow,
            mass,
            sip,
            ar,
            a,
            gvec,
        })
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn inflow(&self) -> &BoundaryPartition {
        &self.inflow
    }

    pub fn mass(&self) -> &BlockDiagonalMass {
        &self.mass
    }

    pub fn sip(&self) -> &SparseMatrix {
        &self.sip
    }

    pub fn ar(&self) -> &SparseMatrix {
        &self.ar
    }

    /// Full stiffness matrix `A = S + R`.
    pub fn stiffness(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn boundary_vector(&self) -> &[f64] {
        &self.gvec
    }

    /// `(f, phi_i)` with the degree-6 rule.
    pub fn load(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        load_vector(&self.mesh, f, &TRIANGLE_DEGREE6)
    }

    pub fn lhg(&self, y: &DgFunction) -> Result<DgFunction> {
        DgFunction::new(
            self.mesh.clone(),
            apply_lhg(y.values(), &self.a, &self.mass, &self.gvec)?,
        )
    }

    /// `L_h y = M^{-1} A y` (no boundary data).
    pub fn lh(&self, y: &[f64]) -> Vec<f64> {
        self.mass.apply_inverse(&self.a.matvec(y))
    }
}
