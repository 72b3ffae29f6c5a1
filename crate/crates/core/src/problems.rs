//! Benchmark problems with known solutions: the disk-contact problem on a
//! square and its shifted version on an L-shaped domain with a singular
//! obstacle component.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{Coefficients, ScalarField, VectorField};
use crate::error::{Error, Result};
use crate::galerkin::ReferenceField;
use crate::mesh::{default_grading, triangulate_graded, triangulate_uniform, Point, PolygonalDomain, Triangulation};
use crate::taylor::Jet;

/// Center of the shifted contact disk on the L-shape.
pub const LSHAPE_SHIFT: Point = [-4.0, 4.0];
pub const DEFAULT_MU: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshMode {
    Uniform,
    /// Same grading exponent at every reentrant corner.
    Graded(f64),
}

#[derive(Clone)]
pub struct ExactSolution {
    pub state: ScalarField,
    pub gradient: VectorField,
    pub control: ScalarField,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: PolygonalDomain,
    pub coeffs: Coefficients,
    pub beta: f64,
    pub sigma: f64,
    pub g: ScalarField,
    pub psi: ScalarField,
    pub y_d: ScalarField,
    pub exact: Option<ExactSolution>,
    pub mesh_mode: MeshMode,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("beta", &self.beta)
            .field("sigma", &self.sigma)
            .field("mesh_mode", &self.mesh_mode)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        let n = self.domain.num_sides();
        for s in 0..n {
            let (a, b) = self.domain.side(s);
            for k in 0..=16 {
                let t = k as f64 / 16.0;
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                if !((self.psi)(p) > (self.g)(p)) {
                    return Err(Error::InvalidParameter(format!(
                        "obstacle must exceed the boundary data; fails at ({}, {})",
                        p[0], p[1]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mesh(&self, level: usize) -> Result<Triangulation> {
        match self.mesh_mode {
            MeshMode::Uniform => triangulate_uniform(&self.domain, level),
            MeshMode::Graded(mu) => triangulate_graded(&self.domain, level, &default_grading(&self.domain, mu)),
        }
    }

    /// Replaces the obstacle by a value no state reaches.
    pub fn unconstrained(mut self) -> Self {
        self.psi = Arc::new(|_| 1e30);
        self
    }
}

/// Radial profile pieces on the transition annulus `1 <= r <= 3`.
fn annulus_weights(r: Jet) -> (Jet, Jet) {
    let r2 = r * r;
    let s = r.add_scalar(-1.0).scale(0.5);
    let one_minus_s4 = (-s).add_scalar(1.0).powi(4);
    let v = r2.add_scalar(-1.0) * one_minus_s4 + (r.add_scalar(-1.0).powi(2) * r.add_scalar(-3.0).powi(4)).scale(0.25);
    let poly = s.scale(4.0) + (s * s).scale(10.0) + s.powi(3).scale(20.0);
    let phi = poly.add_scalar(1.0) * one_minus_s4;
    (v, phi)
}

/// Jet of the disk-contact state `ybar` at `p`.
pub fn ybar_jet(p: Point) -> Jet {
    let (x, y) = Jet::variables(p);
    let r2 = x * x + y * y;
    let r2v = r2.value();
    if r2v <= 1.0 {
        return r2.add_scalar(-1.0);
    }
    let sx = x.add_scalar(4.0).scale(PI / 8.0).sin();
    let sy = y.add_scalar(4.0).scale(PI / 8.0).sin();
    let w = (sx.powi(3) * sy.powi(3)).scale(2.0);
    if r2v >= 9.0 {
        return w;
    }
    let (v, phi) = annulus_weights(r2.sqrt());
    v + (-phi).add_scalar(1.0) * w
}

/// Value-only evaluation of `ybar`.
pub fn ybar(p: Point) -> f64 {
    let r2 = p[0] * p[0] + p[1] * p[1];
    if r2 <= 1.0 {
        return r2 - 1.0;
    }
    let w = 2.0 * ((PI / 8.0 * (p[0] + 4.0)).sin() * (PI / 8.0 * (p[1] + 4.0)).sin()).powi(3);
    if r2 >= 9.0 {
        return w;
    }
    let r = r2.sqrt();
    let s = 0.5 * (r - 1.0);
    let v = (r2 - 1.0) * (1.0 - s).powi(4) + 0.25 * (r - 1.0).powi(2) * (r - 3.0).powi(4);
    let phi = (1.0 + 4.0 * s + 10.0 * s * s + 20.0 * s.powi(3)) * (1.0 - s).powi(4);
    v + (1.0 - phi) * w
}

/// `L y = -Δy + ζ·∇y + γ y` from a jet, for constant coefficients.
pub fn apply_l(j: &Jet, zeta: Point, gamma: f64) -> f64 {
    let g = j.gradient();
    -j.laplacian() + zeta[0] * g[0] + zeta[1] * g[1] + gamma * j.value()
}

/// `Lᵗ L y = Δ²y - 2γΔy - ζᵀ H ζ + γ² y`, for constant coefficients.
pub fn apply_lt_l(j: &Jet, zeta: Point, gamma: f64) -> f64 {
    let h = j.hessian();
    let zhz = zeta[0] * zeta[0] * h[0][0] + 2.0 * zeta[0] * zeta[1] * h[0][1] + zeta[1] * zeta[1] * h[1][1];
    j.bilaplacian() - 2.0 * gamma * j.laplacian() - zhz + gamma * gamma * j.value()
}

fn disk_fields(zeta: Point, gamma: f64, beta: f64, shift: Point) -> (ScalarField, ScalarField, ExactSolution) {
    let at = move |p: Point| [p[0] - shift[0], p[1] - shift[1]];
    let psi: ScalarField = Arc::new(move |p| {
        let q = at(p);
        q[0] * q[0] + q[1] * q[1] - 1.0
    });
    let y_d: ScalarField = Arc::new(move |p| {
        let q = at(p);
        let j = ybar_jet(q);
        let inside = if q[0] * q[0] + q[1] * q[1] <= 1.0 { 2.0 } else { 0.0 };
        beta * apply_lt_l(&j, zeta, gamma) + j.value() + inside
    });
    let exact = ExactSolution {
        state: Arc::new(move |p| ybar(at(p))),
        gradient: Arc::new(move |p| ybar_jet(at(p)).gradient()),
        control: Arc::new(move |p| apply_l(&ybar_jet(at(p)), zeta, gamma)),
    };
    (psi, y_d, exact)
}

/// Square `[-4,4]²`, `g = 0`, `ζ = (1,0)`, `γ = 1`, `β = 1`, `σ = 6`,
/// `ψ = |x|² - 1`; the exact contact set is the unit disk.
pub fn example_square() -> ProblemSpec {
    let zeta = [1.0, 0.0];
    let (psi, y_d, exact) = disk_fields(zeta, 1.0, 1.0, [0.0, 0.0]);
    ProblemSpec {
        name: "square".into(),
        domain: PolygonalDomain::square(-4.0, 4.0),
        coeffs: Coefficients::constant(zeta, 1.0),
        beta: 1.0,
        sigma: 6.0,
        g: Arc::new(|_| 0.0),
        psi,
        y_d,
        exact: Some(exact),
        mesh_mode: MeshMode::Uniform,
    }
}

/// Coefficients of the L-shape problem, needed to build the `ψ_s` reference
/// before the problem itself.
pub fn lshape_coefficients() -> Coefficients {
    Coefficients::constant([2.0, 1.0], 1.0)
}

pub fn lshape_domain() -> PolygonalDomain {
    PolygonalDomain::lshape(8.0)
}

/// L-shape `[-8,8]² \ [0,8]×[-8,0]`, `g = 10`, `ζ = (2,1)`: the square
/// problem shifted to `x* = (-4,4)` with `10 ψ_s` added to `ψ`, `y_d`, and
/// the exact state, where `L ψ_s = 0`, `ψ_s = 1` on the boundary.
pub fn example_lshape(psi_s: Option<Arc<ReferenceField>>, mode: MeshMode) -> Result<ProblemSpec> {
    let psi_s = psi_s.ok_or_else(|| {
        Error::MissingReference(
            "the L-shape problem needs the psi_s reference field; build it with \
             study::load_or_build_reference (the CLI does this automatically)"
                .into(),
        )
    })?;
    let zeta = [2.0, 1.0];
    let (psi0, yd0, ex0) = disk_fields(zeta, 1.0, 1.0, LSHAPE_SHIFT);
    let s = psi_s.clone();
    let sval = move |p: Point| 10.0 * s.value(p).unwrap_or(f64::NAN);
    let (s1, s2, s3) = (sval.clone(), sval.clone(), sval);
    let sg = psi_s;
    let exact = ExactSolution {
        state: Arc::new(move |p| (ex0.state)(p) + s3(p)),
        gradient: Arc::new(move |p| {
            let a = (ex0.gradient)(p);
            let b = sg.gradient(p).unwrap_or([f64::NAN; 2]);
            [a[0] + 10.0 * b[0], a[1] + 10.0 * b[1]]
        }),
        control: ex0.control,
    };
    Ok(ProblemSpec {
        name: match mode {
            MeshMode::Uniform => "lshape-uniform".into(),
            MeshMode::Graded(_) => "lshape-graded".into(),
        },
        domain: lshape_domain(),
        coeffs: lshape_coefficients(),
        beta: 1.0,
        sigma: 6.0,
        g: Arc::new(|_| 10.0),
        psi: Arc::new(move |p| psi0(p) + s1(p)),
        y_d: Arc::new(move |p| yd0(p) + s2(p)),
        exact: Some(exact),
        mesh_mode: mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeReport {
    pub samples: usize,
    pub gradient: f64,
    pub laplacian: f64,
    pub control: f64,
    pub lt_l: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Central fourth-order gradient and second-order Laplacian/biharmonic
/// stencils with one Richardson step.
fn fd_derivatives(f: &dyn Fn(Point) -> f64, p: Point, h: f64) -> ([f64; 2], [[f64; 2]; 2], f64, f64) {
    let at = |dx: f64, dy: f64| f([p[0] + dx, p[1] + dy]);
    let d1 = |h: f64, e: Point| {
        (8.0 * (at(h * e[0], h * e[1]) - at(-h * e[0], -h * e[1]))
            - (at(2.0 * h * e[0], 2.0 * h * e[1]) - at(-2.0 * h * e[0], -2.0 * h * e[1])))
            / (12.0 * h)
    };
    let grad = [d1(h, [1.0, 0.0]), d1(h, [0.0, 1.0])];
    let hess = |h: f64| {
        let c = at(0.0, 0.0);
        let xx = (at(h, 0.0) - 2.0 * c + at(-h, 0.0)) / (h * h);
        let yy = (at(0.0, h) - 2.0 * c + at(0.0, -h)) / (h * h);
        let xy = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
        [[xx, xy], [xy, yy]]
    };
    let bilap = |h: f64| {
        let c = at(0.0, 0.0);
        let axis = at(h, 0.0) + at(-h, 0.0) + at(0.0, h) + at(0.0, -h);
        let diag = at(h, h) + at(h, -h) + at(-h, h) + at(-h, -h);
        let far = at(2.0 * h, 0.0) + at(-2.0 * h, 0.0) + at(0.0, 2.0 * h) + at(0.0, -2.0 * h);
        (20.0 * c - 8.0 * axis + 2.0 * diag + far) / h.powi(4)
    };
    let (ha, hb) = (hess(h), hess(h / 2.0));
    let mut hr = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            hr[i][j] = (4.0 * hb[i][j] - ha[i][j]) / 3.0;
        }
    }
    let lap = hr[0][0] + hr[1][1];
    let bl = (4.0 * bilap(h / 2.0) - bilap(h)) / 3.0;
    (grad, hr, lap, bl)
}

/// Compares the jet derivatives of `ybar` with finite differences at random
/// points of `[-4,4]²` away from the circles `|x| = 1, 3`.
pub fn manufactured_derivatives_check(zeta: Point, gamma: f64, samples: usize, seed: u64) -> DerivativeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = DerivativeReport {
        samples: 0,
        gradient: 0.0,
        laplacian: 0.0,
        control: 0.0,
        lt_l: 0.0,
    };
    let margin = 0.1;
    while rep.samples < samples {
        let p: Point = [rng.random_range(-3.8..3.8), rng.random_range(-3.8..3.8)];
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if (r - 1.0).abs() < margin || (r - 3.0).abs() < margin {
            continue;
        }
        let j = ybar_jet(p);
        let (g, hess, lap, bl) = fd_derivatives(&ybar, p, 1e-2);
        let g4 = fd_derivatives(&ybar, p, 1e-4).0;
        let jg = j.gradient();
        rep.gradient = rep.gradient.max(rel(jg[0], g4[0])).max(rel(jg[1], g4[1]));
        rep.laplacian = rep.laplacian.max(rel(j.laplacian(), lap));
        let fd_l = -lap + zeta[0] * g[0] + zeta[1] * g[1] + gamma * ybar(p);
        rep.control = rep.control.max(rel(apply_l(&j, zeta, gamma), fd_l));
        let zhz =
            zeta[0] * zeta[0] * hess[0][0] + 2.0 * zeta[0] * zeta[1] * hess[0][1] + zeta[1] * zeta[1] * hess[1][1];
        let fd_ltl = bl - 2.0 * gamma * lap - zhz + gamma * gamma * ybar(p);
        rep.lt_l = rep.lt_l.max(rel(apply_lt_l(&j, zeta, gamma), fd_ltl));
        rep.samples += 1;
    }
    rep
}
