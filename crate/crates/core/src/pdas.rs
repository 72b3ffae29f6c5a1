//! Primal-dual active set method for `min 1/2 y^t B y - r^t y` subject to
//! the nodal constraints `y <= psi`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{BlockDiagonalMass, Discretization};
use crate::dg::DgFunction;
use crate::error::{Error, Result};
use crate::sparse::{FixedIndexSolver, SparseMatrix};

#[derive(Debug, Clone)]
pub struct ObstacleQP {
    b: SparseMatrix,
    rhs: Vec<f64>,
    psi: Vec<f64>,
}

impl ObstacleQP {
    pub fn new(b: SparseMatrix, rhs: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        let n = b.nrows();
        if b.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.ncols(),
            });
        }
        for len in [rhs.len(), psi.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        if !b.is_symmetric() && b.symmetry_defect() > 1e-10 * b.max_abs() {
            return Err(Error::InvalidParameter("QP matrix is not symmetric".into()));
        }
        Ok(Self { b, rhs, psi })
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.b
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        let by = self.b.matvec(y);
        y.iter()
            .zip(&by)
            .zip(&self.rhs)
            .map(|((yi, bi), ri)| 0.5 * yi * bi - ri * yi)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `|A_k|`, the set predicted from this iterate.
    pub active: usize,
    /// `|A_k \ A_{k-1}| + |A_{k-1} \ A_k|`.
    pub changed: usize,
    /// `max |B y + lambda - r|` after the solve.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct PdasState {
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Active flags of the set used for the last solve.
    pub active: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

impl PdasState {
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn inactive_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| !self.active[i]).collect()
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

#[derive(Debug, Clone)]
pub struct PdasOptions {
    /// Active-set prediction weight; `None` selects [`default_penalty`].
    pub c: Option<f64>,
    pub max_iter: usize,
    /// Defaults to `min(psi, 0)`.
    pub y0: Option<Vec<f64>>,
    /// Defaults to zero.
    pub lambda0: Option<Vec<f64>>,
}

impl Default for PdasOptions {
    fn default() -> Self {
        Self {
            c: None,
            max_iter: 50,
            y0: None,
            lambda0: None,
        }
    }
}

/// `1e3 * mean(diag B) / mean(diag M)`.
pub fn default_penalty(b: &SparseMatrix, mass: &BlockDiagonalMass) -> f64 {
    let db: f64 = b.diagonal().iter().sum::<f64>() / b.nrows() as f64;
    let dm: f64 = (0..mass.num_blocks())
        .map(|t| {
            let blk = mass.block(t);
            blk[0][0] + blk[1][1] + blk[2][2]
        })
        .sum::<f64>()
        / mass.dim() as f64;
    1e3 * db / dm
}

fn predict(lambda: &[f64], y: &[f64], psi: &[f64], c: f64) -> Vec<bool> {
    (0..y.len()).map(|j| lambda[j] + c * (y[j] - psi[j]) > 0.0).collect()
}

pub fn pdas_solve(qp: &ObstacleQP, c: f64, y0: &[f64], lambda0: &[f64], max_iter: usize) -> Result<PdasState> {
    let n = qp.dim();
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    for len in [y0.len(), lambda0.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    if let Some(j) = lambda0.iter().position(|&l| !(l >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "lambda0[{j}] = {} is negative",
            lambda0[j]
        )));
    }
    let mut solver = FixedIndexSolver::new(&qp.b)?;
    let mut active = predict(lambda0, y0, &qp.psi, c);
    let mut history = Vec::new();
    for k in 1..=max_iter {
        let y = solver.solve(&active, &qp.psi, &qp.rhs)?;
        let by = qp.b.matvec(&y);
        let mut lambda = vec![0.0; n];
        let mut residual = 0.0f64;
        for j in 0..n {
            if active[j] {
                lambda[j] = qp.rhs[j] - by[j];
            } else {
                residual = residual.max((by[j] - qp.rhs[j]).abs());
            }
        }
        let next = predict(&lambda, &y, &qp.psi, c);
        let changed = next.iter().zip(&active).filter(|(a, b)| a != b).count();
        history.push(IterationRecord {
            iteration: k,
            active: next.iter().filter(|&&a| a).count(),
            changed,
            residual,
        });
        if changed == 0 || k == max_iter {
            return Ok(PdasState {
                y,
                lambda,
                active,
                iterations: k,
                converged: changed == 0,
                history,
            });
        }
        active = next;
    }
    unreachable!("loop returns on the last iteration")
}

/// Runs PDAS with the defaults of [`PdasOptions`] filled in.
pub fn pdas_solve_with(qp: &ObstacleQP, mass: &BlockDiagonalMass, opts: &PdasOptions) -> Result<PdasState> {
    let c = opts.c.unwrap_or_else(|| default_penalty(&qp.b, mass));
    let y0 = opts
        .y0
        .clone()
        .unwrap_or_else(|| qp.psi.iter().map(|&p| p.min(0.0)).collect());
    let l0 = opts.lambda0.clone().unwrap_or_else(|| vec![0.0; qp.dim()]);
    pdas_solve(qp, c, &y0, &l0, opts.max_iter)
}

/// `u_h = M^{-1} (A y + gvec)`.
pub fn recover_control(y: &DgFunction, disc: &Discretization) -> Result<DgFunction> {
    disc.lhg(y)
}

/// Operators for evaluating the discrete variational inequality directly,
/// without going through `B`.
pub struct ViData<'a> {
    pub disc: &'a Discretization,
    /// `(y_d, phi_i)`.
    pub yd_load: &'a [f64],
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `max |B y + lambda - r|`.
    pub stationarity: f64,
    /// `max(y - psi)`, positive when infeasible.
    pub primal_infeasibility: f64,
    /// `max(-lambda)` over the active set.
    pub dual_infeasibility: f64,
    /// `max |lambda_j (y_j - psi_j)|`.
    pub complementarity: f64,
    /// Smallest normalized VI value `g.(z - y) / (|g| |z - y|)` over the sampled `z`.
    pub vi_min: Option<f64>,
    /// `max(1, max|r|)`; residual tolerances are relative to it.
    pub scale: f64,
}

impl KktReport {
    pub fn passes(&self, tol: f64) -> bool {
        let t = tol * self.scale;
        self.stationarity <= t
            && self.primal_infeasibility <= t
            && self.dual_infeasibility <= t
            && self.complementarity <= t
            && self.vi_min.is_none_or(|v| v >= -tol)
    }
}

pub fn check_kkt(
    state: &PdasState,
    qp: &ObstacleQP,
    vi: Option<&ViData<'_>>,
    samples: usize,
    seed: u64,
) -> Result<KktReport> {
    let n = qp.dim();
    if state.y.len() != n || state.lambda.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: state.y.len(),
        });
    }
    let by = qp.b.matvec(&state.y);
    let mut rep = KktReport {
        stationarity: 0.0,
        primal_infeasibility: f64::NEG_INFINITY,
        dual_infeasibility: 0.0,
        complementarity: 0.0,
        vi_min: None,
        scale: qp.rhs.iter().fold(1.0f64, |m, v| m.max(v.abs())),
    };
    for j in 0..n {
        rep.stationarity = rep.stationarity.max((by[j] + state.lambda[j] - qp.rhs[j]).abs());
        rep.primal_infeasibility = rep.primal_infeasibility.max(state.y[j] - qp.psi[j]);
        if state.active[j] {
            rep.dual_infeasibility = rep.dual_infeasibility.max(-state.lambda[j]);
        }
        rep.complementarity = rep
            .complementarity
            .max((state.lambda[j] * (state.y[j] - qp.psi[j])).abs());
    }
    if let Some(vi) = vi {
        let g = vi_gradient(vi, &state.y)?;
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spread = state
            .y
            .iter()
            .zip(&qp.psi)
            .fold(1.0f64, |m, (y, p)| m.max((p - y).abs()));
        let mut worst = f64::INFINITY;
        for _ in 0..samples {
            // z in K_h: random perturbation of y, clipped at psi
            let d: Vec<f64> = (0..n)
                .map(|j| {
                    let z = (state.y[j] + spread * rng.random_range(-1.0..1.0)).min(qp.psi[j]);
                    z - state.y[j]
                })
                .collect();
            let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dn == 0.0 || gnorm == 0.0 {
                continue;
            }
            let val: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            worst = worst.min(val / (gnorm * dn));
        }
        rep.vi_min = Some(if worst.is_finite() { worst } else { 0.0 });
    }
    Ok(rep)
}

/// Gradient of the reduced objective at `y`:
/// `M y - (y_d, .) + beta A^t M^{-1} (A y + gvec)`.
fn vi_gradient(vi: &ViData<'_>, y: &[f64]) -> Result<Vec<f64>> {
    let d = vi.disc;
    let u = crate::assembly::apply_lhg(y, d.stiffness(), d.mass(), d.boundary_vector())?;
    let mu = d.mass().apply(&u);
    let at = d.stiffness().transpose_matvec(&mu);
    let my = d.mass().apply(y);
    Ok((0..y.len()).map(|j| my[j] - vi.yd_load[j] + vi.beta * at[j]).collect())
}
