//! Acceptance suite. Each test prints one PASS/FAIL line for its criterion
//! and then asserts it.

#![allow(clippy::needless_range_loop)]

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use dgocp_core::assembly::{
    assemble_ar, assemble_bh, assemble_boundary_data, assemble_mass, assemble_sip, Coefficients, Discretization,
};
use dgocp_core::dg::{l2_project, DgFunction};
use dgocp_core::galerkin::{ritz_project, solve_state};
use dgocp_core::mesh::{triangulate_uniform, Point, PolygonalDomain, Triangulation};
use dgocp_core::metrics::{coercivity_constant, error_energy, error_l2, mean_tail, observed_orders};
use dgocp_core::pdas::{check_kkt, pdas_solve_with, KktReport, ObstacleQP, PdasOptions, ViData};
use dgocp_core::problems::{
    apply_l, example_lshape, example_square, lshape_coefficients, lshape_domain, MeshMode, LSHAPE_SHIFT,
};
use dgocp_core::study::{load_or_build_reference, run_convergence, Column, LevelSolution, StudyReport};
use dgocp_core::taylor::Jet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: u32, title: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    // written to the handle directly so the line survives output capture
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{tag} criterion {criterion} ({title}): {detail}");
    let _ = out.flush();
    assert!(pass, "criterion {criterion} failed: {detail}");
}

// ---------------------------------------------------------------------------
// Shared convergence studies. Only one heavy computation runs at a time: the
// level-6 systems of two studies do not fit in memory together.

static HEAVY: Mutex<()> = Mutex::new(());

struct Geometry {
    level: usize,
    h: f64,
    active_nodes: usize,
    /// Largest distance of an active node from the closed unit disk.
    max_outside: f64,
}

struct Study {
    report: StudyReport,
    kkt: Vec<(usize, bool, KktReport)>,
    geometry: Vec<Geometry>,
    elapsed: Duration,
}

const FINEST: usize = 6;

fn active_geometry(sol: &LevelSolution, center: Point) -> Geometry {
    let mesh = sol.disc.mesh();
    let mut nodes: Vec<usize> = sol
        .pdas
        .active_indices()
        .iter()
        .map(|&i| mesh.triangles()[i / 3][i % 3])
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    let max_outside = nodes
        .iter()
        .map(|&v| {
            let p = mesh.points()[v];
            ((p[0] - center[0]).hypot(p[1] - center[1]) - 1.0).max(0.0)
        })
        .fold(0.0, f64::max);
    Geometry {
        level: sol.level,
        h: mesh.h(),
        active_nodes: nodes.len(),
        max_outside,
    }
}

fn run_study(problem: &dgocp_core::ProblemSpec, center: Point) -> Study {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut kkt = Vec::new();
    let mut geometry = Vec::new();
    let report = run_convergence(problem, 1..=FINEST, &PdasOptions::default(), |sol, row| {
        let vi = ViData {
            disc: &sol.disc,
            yd_load: &sol.yd_load,
            beta: problem.beta,
        };
        let rep = check_kkt(&sol.pdas, &sol.qp, Some(&vi), 20, 100 + row.level as u64).expect("kkt check");
        kkt.push((row.level, sol.pdas.converged, rep));
        geometry.push(active_geometry(sol, center));
        eprintln!(
            "{} level {} done after {:.0?}",
            problem.name,
            row.level,
            start.elapsed()
        );
    })
    .expect("convergence study");
    Study {
        report,
        kkt,
        geometry,
        elapsed: start.elapsed(),
    }
}

fn reference_cache() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("psi_s")
}

fn square_study() -> &'static Study {
    static S: OnceLock<Study> = OnceLock::new();
    S.get_or_init(|| run_study(&example_square(), [0.0, 0.0]))
}

fn lshape_study(mode: MeshMode) -> Study {
    let reference = {
        let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
        load_or_build_reference(Some(&reference_cache()), FINEST + 2, 0.6).expect("psi_s reference")
    };
    let problem = example_lshape(Some(reference), mode).expect("lshape problem");
    run_study(&problem, LSHAPE_SHIFT)
}

fn lshape_uniform() -> &'static Study {
    static S: OnceLock<Study> = OnceLock::new();
    S.get_or_init(|| lshape_study(MeshMode::Uniform))
}

fn lshape_graded() -> &'static Study {
    static S: OnceLock<Study> = OnceLock::new();
    S.get_or_init(|| lshape_study(MeshMode::Graded(0.6)))
}

fn within(x: Option<f64>, lo: f64, hi: f64) -> bool {
    x.is_some_and(|v| v >= lo && v <= hi)
}

fn fmt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{v:.3}"))
}

// ---------------------------------------------------------------------------
// 1. Unconstrained forward solve with a smooth manufactured state.

fn manufactured_jet(p: Point) -> Jet {
    let k = std::f64::consts::PI / 8.0;
    let (x, y) = Jet::variables(p);
    (x.scale(k).sin().powi(3) * y.scale(k).sin().powi(3)).scale(2.0)
}

#[test]
fn criterion_1_unconstrained_rates() {
    let start = Instant::now();
    let zeta = [1.0, 0.0];
    let w = |p: Point| manufactured_jet(p).value();
    let gw = |p: Point| manufactured_jet(p).gradient();
    let u = move |p: Point| apply_l(&manufactured_jet(p), zeta, 1.0);
    let domain = PolygonalDomain::square(-4.0, 4.0);
    let (mut l2, mut en) = (Vec::new(), Vec::new());
    for level in 1..=5 {
        let mesh = Arc::new(triangulate_uniform(&domain, level).unwrap());
        let disc = Discretization::new(mesh, Coefficients::constant(zeta, 1.0), 6.0, &w).unwrap();
        let y = solve_state(&disc, u).unwrap();
        l2.push(error_l2(&y, &w));
        en.push(error_energy(&y, 6.0, &w, &gw));
    }
    let (ol2, oen) = (mean_tail(&observed_orders(&l2), 3), mean_tail(&observed_orders(&en), 3));
    let elapsed = start.elapsed();
    let pass = within(ol2, 1.8, 2.2) && within(oen, 0.8, 1.2) && elapsed < Duration::from_secs(60);
    verdict(
        1,
        "unconstrained rates",
        pass,
        &format!("L2 order {}, energy order {}, {:.1?}", fmt(ol2), fmt(oen), elapsed),
    );
}

// ---------------------------------------------------------------------------
// 2. L_{h,g} R_h w = Q_h L w.

#[test]
fn criterion_2_ritz_identity() {
    type Field = Box<dyn Fn(Point) -> f64>;
    type Grad = Box<dyn Fn(Point) -> Point>;
    type Lap = Box<dyn Fn(Point) -> f64>;
    let cases: Vec<(Field, Grad, Lap)> = vec![
        (
            Box::new(|p| p[0] * p[0] * p[1] - 2.0 * p[1] * p[1] + p[0] + 0.5),
            Box::new(|p| [2.0 * p[0] * p[1] + 1.0, p[0] * p[0] - 4.0 * p[1]]),
            Box::new(|p| 2.0 * p[1] - 4.0),
        ),
        (
            Box::new(|p| 0.01 * p[0].powi(4) - 0.02 * p[0] * p[1].powi(3) + p[1]),
            Box::new(|p| {
                [
                    0.04 * p[0].powi(3) - 0.02 * p[1].powi(3),
                    -0.06 * p[0] * p[1] * p[1] + 1.0,
                ]
            }),
            Box::new(|p| 0.12 * p[0] * p[0] - 0.12 * p[0] * p[1]),
        ),
    ];
    let zeta = [1.0, -0.5];
    let gamma = 1.5;
    let mesh = Arc::new(triangulate_uniform(&PolygonalDomain::square(-4.0, 4.0), 3).unwrap());
    let mut residuals = Vec::new();
    for (w, gw, lap) in &cases {
        let disc = Discretization::new(mesh.clone(), Coefficients::constant(zeta, gamma), 6.0, w.as_ref()).unwrap();
        let r = ritz_project(&disc, w.as_ref(), gw.as_ref()).unwrap();
        let lhs = disc.lhg(&r).unwrap();
        let lw = |p: Point| {
            let g = gw(p);
            -lap(p) + zeta[0] * g[0] + zeta[1] * g[1] + gamma * w(p)
        };
        let rhs = l2_project(&mesh, lw);
        let diff: Vec<f64> = lhs.values().iter().zip(rhs.values()).map(|(a, b)| a - b).collect();
        residuals.push(error_l2(&DgFunction::new(mesh.clone(), diff).unwrap(), &|_| 0.0));
    }
    let pass = residuals.iter().all(|&r| r <= 1e-9);
    verdict(
        2,
        "ritz identity",
        pass,
        &format!("residuals {:.2e} and {:.2e} on level 3", residuals[0], residuals[1]),
    );
}

// ---------------------------------------------------------------------------
// 3. Square example rates.

#[test]
fn criterion_3_square_rates() {
    let s = square_study();
    let targets = [
        (Column::L2, 1.9),
        (Column::Energy, 1.1),
        (Column::Control, 1.45),
        (Column::Linf, 1.9),
    ];
    let mut pass = s.report.all_converged() && s.elapsed < Duration::from_secs(600);
    let mut detail = Vec::new();
    for (c, t) in targets {
        let m = s.report.mean_order(c, 4);
        pass &= within(m, t - 0.35, t + 0.35);
        detail.push(format!("{c:?} {} (target {t})", fmt(m)));
    }
    verdict(
        3,
        "square rates",
        pass,
        &format!("{}, levels 1-{FINEST} in {:.0?}", detail.join(", "), s.elapsed),
    );
}

// ---------------------------------------------------------------------------
// 4. L-shape rates, uniform and graded.

#[test]
fn criterion_4_lshape_rates() {
    let u = lshape_uniform();
    let g = lshape_graded();
    let ue = u.report.mean_order(Column::Energy, 3);
    let ul = u.report.mean_order(Column::Linf, 3);
    let ge = g.report.mean_order(Column::Energy, 3);
    let gl = g.report.mean_order(Column::Linf, 3);
    let checks = [
        ("uniform energy in [0.55, 0.95]", within(ue, 0.55, 0.95), ue),
        ("uniform Linf in [0.55, 0.85]", within(ul, 0.55, 0.85), ul),
        ("graded energy >= 1.0", within(ge, 1.0, f64::INFINITY), ge),
        ("graded Linf >= 1.0", within(gl, 1.0, f64::INFINITY), gl),
    ];
    let detail: Vec<String> = checks
        .iter()
        .map(|(name, ok, v)| format!("{name}: {} {}", fmt(*v), if *ok { "ok" } else { "MISSED" }))
        .collect();
    let pass = checks.iter().all(|c| c.1) && u.report.all_converged() && g.report.all_converged();
    verdict(4, "lshape rates", pass, &detail.join("; "));
}

// ---------------------------------------------------------------------------
// 5. PDAS against exhaustive enumeration of active sets.

fn dense(b: &dgocp_core::SparseMatrix) -> Vec<Vec<f64>> {
    b.to_dense()
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-300 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Solution of the equality-constrained problem with `active` pinned to
/// `psi`, if it satisfies every KKT condition.
fn kkt_point(b: &[Vec<f64>], r: &[f64], psi: &[f64], active: &[bool]) -> Option<Vec<f64>> {
    let n = r.len();
    let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
    let mut y: Vec<f64> = (0..n).map(|i| if active[i] { psi[i] } else { 0.0 }).collect();
    if !free.is_empty() {
        let sub: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| b[i][j]).collect()).collect();
        let rhs: Vec<f64> = free
            .iter()
            .map(|&i| r[i] - (0..n).filter(|&j| active[j]).map(|j| b[i][j] * psi[j]).sum::<f64>())
            .collect();
        for (k, v) in gauss_solve(sub, rhs)?.into_iter().enumerate() {
            y[free[k]] = v;
        }
    }
    let scale = r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-11 * scale;
    for i in 0..n {
        let lambda = r[i] - (0..n).map(|j| b[i][j] * y[j]).sum::<f64>();
        if active[i] && lambda < -tol {
            return None;
        }
        if !active[i] && y[i] > psi[i] + tol {
            return None;
        }
    }
    Some(y)
}

fn projected_gauss_seidel(b: &[Vec<f64>], r: &[f64], psi: &[f64]) -> Vec<f64> {
    let n = r.len();
    let mut y = vec![0.0; n];
    for _ in 0..2000 {
        for i in 0..n {
            let s: f64 = (0..n).filter(|&j| j != i).map(|j| b[i][j] * y[j]).sum();
            y[i] = ((r[i] - s) / b[i][i]).min(psi[i]);
        }
    }
    y
}

/// Visits the subsets at Hamming distance `d` from `base` until `f` returns a value.
fn flips<T>(
    base: &[bool],
    d: usize,
    from: usize,
    cur: &mut Vec<bool>,
    f: &mut impl FnMut(&[bool]) -> Option<T>,
) -> Option<T> {
    if d == 0 {
        return f(cur);
    }
    for i in from..base.len() {
        cur[i] = !cur[i];
        if let Some(v) = flips(base, d - 1, i + 1, cur, f) {
            return Some(v);
        }
        cur[i] = !cur[i];
    }
    None
}

/// The unique KKT point by enumerating active sets. Small problems are
/// enumerated in full and every KKT subset must give the same `y`; larger ones
/// search outward from a projected Gauss-Seidel guess and stop at the first hit.
fn enumerate(b: &[Vec<f64>], r: &[f64], psi: &[f64]) -> Vec<f64> {
    let n = r.len();
    if n <= 12 {
        let mut found: Option<Vec<f64>> = None;
        for mask in 0u32..(1 << n) {
            let active: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            if let Some(y) = kkt_point(b, r, psi, &active) {
                if let Some(prev) = &found {
                    let d = prev.iter().zip(&y).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
                    assert!(d < 1e-10, "two KKT subsets disagree by {d}");
                } else {
                    found = Some(y);
                }
            }
        }
        return found.expect("no KKT subset");
    }
    let guess = projected_gauss_seidel(b, r, psi);
    let base: Vec<bool> = (0..n).map(|i| guess[i] >= psi[i] - 1e-8).collect();
    for d in 0..=n {
        let mut cur = base.clone();
        if let Some(y) = flips(&base, d, 0, &mut cur, &mut |a: &[bool]| kkt_point(b, r, psi, a)) {
            return y;
        }
    }
    panic!("no KKT subset");
}

fn tiny_meshes() -> Vec<Triangulation> {
    let tri = Triangulation::from_raw(vec![[0.0, 0.0], [1.0, 0.1], [0.2, 0.9]], vec![[0, 1, 2]]).unwrap();
    let two = Triangulation::from_raw(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap();
    let four = Triangulation::from_raw(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.45, 0.55]],
        vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]],
    )
    .unwrap();
    let mut pts = Vec::new();
    for j in 0..3 {
        for i in 0..3 {
            pts.push([i as f64 * 0.5, j as f64 * 0.5]);
        }
    }
    let mut tris = Vec::new();
    for j in 0..2 {
        for i in 0..2 {
            let a = 3 * j + i;
            tris.push([a, a + 1, a + 4]);
            tris.push([a, a + 4, a + 3]);
        }
    }
    let eight = Triangulation::from_raw(pts, tris).unwrap();
    vec![tri, two, four, eight]
}

#[test]
fn criterion_5_pdas_matches_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut instances = 0;
    let (mut active, mut unknowns) = (0, 0);
    for mesh in tiny_meshes() {
        let mesh = Arc::new(mesh);
        let n = mesh.num_dofs();
        for _ in 0..20 {
            let zeta = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let gamma = rng.random_range(0.5..2.0);
            let beta = 10f64.powf(rng.random_range(-1.0..1.0));
            let disc = Discretization::new(mesh.clone(), Coefficients::constant(zeta, gamma), 6.0, &|_| 0.0).unwrap();
            let bm = assemble_bh(disc.stiffness(), disc.mass(), beta).unwrap();
            let y_free: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = bm.matvec(&y_free);
            let psi: Vec<f64> = y_free.iter().map(|y| y + rng.random_range(-0.5..0.5)).collect();
            let qp = ObstacleQP::new(bm.clone(), r.clone(), psi.clone()).unwrap();
            let state = pdas_solve_with(&qp, disc.mass(), &PdasOptions::default()).unwrap();
            let exact = enumerate(&dense(&bm), &r, &psi);
            let d = state
                .y
                .iter()
                .zip(&exact)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(d);
            active += state.num_active();
            unknowns += n;
            if !state.converged || d > 1e-10 {
                failures += 1;
            }
            instances += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = failures == 0 && elapsed < Duration::from_secs(30);
    verdict(
        5,
        "pdas exactness",
        pass,
        &format!("{instances} instances on 3/6/12/24 unknowns, {failures} mismatches, max |dy| {worst:.1e}, {active}/{unknowns} constraints active, {elapsed:.1?}"),
    );
}

// ---------------------------------------------------------------------------
// 6. KKT and discrete VI on every computed level.

#[test]
fn criterion_6_kkt_and_vi() {
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, s) in [
        ("square", square_study()),
        ("lshape-uniform", lshape_uniform()),
        ("lshape-graded", lshape_graded()),
    ] {
        let mut worst_vi = f64::INFINITY;
        let mut worst_res = 0.0f64;
        for (level, converged, rep) in &s.kkt {
            let ok = *converged && rep.passes(1e-8);
            if !ok {
                lines.push(format!("{name} level {level} failed: {rep:?}"));
            }
            pass &= ok;
            worst_vi = worst_vi.min(rep.vi_min.unwrap_or(f64::NEG_INFINITY));
            let rel = [
                rep.stationarity,
                rep.primal_infeasibility.max(0.0),
                rep.dual_infeasibility,
                rep.complementarity,
            ]
            .into_iter()
            .fold(0.0f64, f64::max)
                / rep.scale;
            worst_res = worst_res.max(rel);
        }
        lines.push(format!(
            "{name}: max relative residual {worst_res:.1e}, min VI {worst_vi:.2e}"
        ));
    }
    verdict(6, "kkt and vi", pass, &lines.join("; "));
}

// ---------------------------------------------------------------------------
// 7. Assembly against a dense oracle written from the bilinear forms.

fn gauss_legendre4() -> [(f64, f64); 4] {
    let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let wa = (18.0 + 30f64.sqrt()) / 36.0;
    let wb = (18.0 - 30f64.sqrt()) / 36.0;
    // mapped to [0, 1]
    [
        (0.5 - 0.5 * b, 0.5 * wb),
        (0.5 - 0.5 * a, 0.5 * wa),
        (0.5 + 0.5 * a, 0.5 * wa),
        (0.5 + 0.5 * b, 0.5 * wb),
    ]
}

struct OracleElement {
    verts: [Point; 3],
    grads: [Point; 3],
    area: f64,
}

impl OracleElement {
    fn new(verts: [Point; 3]) -> Self {
        let [a, b, c] = verts;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let grads = [
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ];
        Self {
            verts,
            grads,
            area: det.abs() / 2.0,
        }
    }

    fn basis(&self, k: usize, p: Point) -> f64 {
        let v = self.verts[k];
        let g = self.grads[k];
        // the basis function is 1 at its vertex and affine
        1.0 + g[0] * (p[0] - v[0]) + g[1] * (p[1] - v[1])
    }
}

#[test]
fn criterion_7_assembly_oracle() {
    let points = vec![[0.0, 0.0], [1.0, 0.2], [0.3, 1.0], [1.2, 1.1]];
    let mesh = Triangulation::from_raw(points.clone(), vec![[0, 1, 2], [1, 3, 2]]).unwrap();
    let tris = mesh.triangles().to_vec();
    let elems: Vec<OracleElement> = tris.iter().map(|t| OracleElement::new(t.map(|v| points[v]))).collect();
    let sigma = 7.5;
    let zeta = [0.7, -0.3];
    let gamma = 1.3;
    let g = |p: Point| 1.0 + p[0] - 2.0 * p[1] * p[1];
    let n = 6;
    let mut sip = vec![vec![0.0; n]; n];
    let mut ar = vec![vec![0.0; n]; n];
    let mut gvec = vec![0.0; n];
    // volume terms: row i = test function, column j = trial function
    for (t, el) in elems.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                let (gi, gj) = (el.grads[i], el.grads[j]);
                sip[3 * t + i][3 * t + j] += el.area * (gi[0] * gj[0] + gi[1] * gj[1]);
                let mass = el.area * if i == j { 1.0 / 6.0 } else { 1.0 / 12.0 };
                ar[3 * t + i][3 * t + j] += el.area / 3.0 * (zeta[0] * gj[0] + zeta[1] * gj[1]) + gamma * mass;
            }
        }
    }
    // edges: find each once, with the elements that contain it
    let mut edges: Vec<([usize; 2], Vec<usize>)> = Vec::new();
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            let mut key = [tri[k], tri[(k + 1) % 3]];
            key.sort_unstable();
            match edges.iter_mut().find(|e| e.0 == key) {
                Some(e) => e.1.push(t),
                None => edges.push((key, vec![t])),
            }
        }
    }
    assert_eq!(edges.len(), 5);
    for (key, owners) in &edges {
        let (a, b) = (points[key[0]], points[key[1]]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let plus = owners[0];
        // outward normal of the plus element
        let mut nrm = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
        let third = elems[plus].verts.iter().copied().find(|v| *v != a && *v != b).unwrap();
        if nrm[0] * (third[0] - a[0]) + nrm[1] * (third[1] - a[1]) > 0.0 {
            nrm = [-nrm[0], -nrm[1]];
        }
        let zn = zeta[0] * nrm[0] + zeta[1] * nrm[1];
        // (global dof, element, local index, sign in the jump)
        let mut dofs = Vec::new();
        for (side, &t) in owners.iter().enumerate() {
            for k in 0..3 {
                dofs.push((3 * t + k, t, k, if side == 0 { 1.0 } else { -1.0 }));
            }
        }
        let interior = owners.len() == 2;
        let kappa = if interior { 0.5 } else { 1.0 };
        for (s, w) in gauss_legendre4() {
            let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let wl = w * len;
            let jump = |&(_, t, k, sg): &(usize, usize, usize, f64)| sg * elems[t].basis(k, p);
            let avg_dn = |&(_, t, k, _): &(usize, usize, usize, f64)| {
                let gr = elems[t].grads[k];
                kappa * (gr[0] * nrm[0] + gr[1] * nrm[1])
            };
            let avg = |&(_, t, k, _): &(usize, usize, usize, f64)| kappa * elems[t].basis(k, p);
            for di in &dofs {
                for dj in &dofs {
                    let (i, j) = (di.0, dj.0);
                    sip[i][j] +=
                        wl * (-avg_dn(dj) * jump(di) - avg_dn(di) * jump(dj) + sigma / len * jump(dj) * jump(di));
                    if interior || zn < 0.0 {
                        ar[i][j] += wl * (-zn * jump(dj) * avg(di));
                    }
                }
                if !interior {
                    let dn = avg_dn(di);
                    let v = jump(di);
                    let inflow = if zn < 0.0 { zn * g(p) * v } else { 0.0 };
                    gvec[di.0] += wl * (g(p) * (dn - sigma / len * v) + inflow);
                }
            }
        }
    }
    let coeffs = Coefficients::constant(zeta, gamma);
    let sip_h = assemble_sip(&mesh, sigma).unwrap().to_dense();
    let ar_h = assemble_ar(&mesh, &coeffs).unwrap().to_dense();
    let g_h = assemble_boundary_data(&mesh, &g, sigma, &coeffs);
    let maxdiff = |x: &[Vec<f64>], y: &[Vec<f64>]| {
        x.iter()
            .flatten()
            .zip(y.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    let d_sip = maxdiff(&sip, &sip_h);
    let d_ar = maxdiff(&ar, &ar_h);
    let d_g = gvec.iter().zip(&g_h).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let reference = Triangulation::from_raw(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
    let blk = assemble_mass(&reference).unwrap().block(0);
    let d_m = (0..9).fold(0.0f64, |m, k| {
        let (i, j) = (k / 3, k % 3);
        let exact = if i == j { 2.0 } else { 1.0 } / 24.0;
        m.max((blk[i][j] - exact).abs())
    });
    let pass = d_sip <= 1e-12 && d_ar <= 1e-12 && d_g <= 1e-12 && d_m <= 1e-12;
    verdict(
        7,
        "assembly oracle",
        pass,
        &format!("max entry deviation SIP {d_sip:.1e}, AR {d_ar:.1e}, boundary vector {d_g:.1e}, mass block {d_m:.1e}"),
    );
}

// ---------------------------------------------------------------------------
// 8. Coercivity constant at sigma = 6.

#[test]
fn criterion_8_coercivity() {
    let mut all = Vec::new();
    let mut lines = Vec::new();
    for (name, domain, coeffs) in [
        (
            "square",
            PolygonalDomain::square(-4.0, 4.0),
            Coefficients::constant([1.0, 0.0], 1.0),
        ),
        ("lshape", lshape_domain(), lshape_coefficients()),
    ] {
        let mut cs = Vec::new();
        for level in 1..=4 {
            let mesh = Arc::new(triangulate_uniform(&domain, level).unwrap());
            let disc = Discretization::new(mesh, coeffs.clone(), 6.0, &|_| 0.0).unwrap();
            cs.push(coercivity_constant(&disc).unwrap());
        }
        lines.push(format!("{name} {cs:.4?}"));
        all.extend(cs);
    }
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pass = lo > 0.0 && hi / lo <= 2.0;
    verdict(
        8,
        "coercivity",
        pass,
        &format!("{}, max/min {:.2}", lines.join(", "), hi / lo),
    );
}

// ---------------------------------------------------------------------------
// 9. Active set geometry on the square.

#[test]
fn criterion_9_active_set_geometry() {
    let s = square_study();
    let finest = s.geometry.last().expect("levels");
    let near_disk = finest.active_nodes > 0 && finest.max_outside <= 2.0 * finest.h;
    let counts: Vec<usize> = s.geometry.iter().map(|g| g.active_nodes).collect();
    // growth exponent of the active count in 1/h over the last three levels
    let exps: Vec<f64> = s.geometry[s.geometry.len() - 3..]
        .windows(2)
        .map(|w| (w[1].active_nodes as f64 / w[0].active_nodes as f64).ln() / (w[0].h / w[1].h).ln())
        .collect();
    let mean_exp = exps.iter().sum::<f64>() / exps.len() as f64;
    let pass = near_disk && (1.5..=2.5).contains(&mean_exp);
    verdict(
        9,
        "active set geometry",
        pass,
        &format!(
            "level {}: max distance outside disk {:.2e} (2h = {:.2e}); active nodes per level {counts:?}, growth h^-{mean_exp:.2}",
            finest.level,
            finest.max_outside,
            2.0 * finest.h
        ),
    );
}
