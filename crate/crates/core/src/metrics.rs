//! Error norms, mesh-dependent norms, and observed convergence orders.

use crate::assembly::Discretization;
use crate::dg::DgFunction;
use crate::error::{Error, Result};
use crate::mesh::{dot, Point, Triangulation};
use crate::quadrature::{gauss5, TRIANGLE_DEGREE6};
use crate::sparse::{CholeskySolver, SparseMatrix};

/// `||y_h - f||_{L2}` with the degree-6 rule on every element.
pub fn error_l2(y: &DgFunction, f: &dyn Fn(Point) -> f64) -> f64 {
    let mesh = y.mesh();
    let mut s = 0.0;
    for t in 0..mesh.num_elements() {
        let area = mesh.area(t);
        for q in &TRIANGLE_DEGREE6 {
            let d = y.eval(t, q.bary) - f(mesh.map_point(t, q.bary));
            s += q.weight * area * d * d;
        }
    }
    s.sqrt()
}

/// Max of `|y_h - f|` over vertices, edge midpoints, and centroids.
pub fn error_linf(y: &DgFunction, f: &dyn Fn(Point) -> f64) -> f64 {
    const SAMPLES: [[f64; 3]; 7] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    ];
    let mesh = y.mesh();
    let mut m = 0.0f64;
    for t in 0..mesh.num_elements() {
        for b in &SAMPLES {
            m = m.max((y.eval(t, *b) - f(mesh.map_point(t, *b))).abs());
        }
    }
    m
}

/// Energy norm of `y_h - f`: broken gradient plus, for every element and
/// each of its edges, `σ/h ||[e]||² + h/σ ||{n·∇e}||²`. Interior edges are
/// therefore counted once from each side. `f` is smooth, so its jumps vanish
/// except on the boundary, where the jump is the trace.
pub fn error_energy(y: &DgFunction, sigma: f64, f: &dyn Fn(Point) -> f64, grad_f: &dyn Fn(Point) -> Point) -> f64 {
    let mesh = y.mesh();
    let mut s = 0.0;
    for t in 0..mesh.num_elements() {
        let area = mesh.area(t);
        let gy = y.gradient(t);
        for q in &TRIANGLE_DEGREE6 {
            let gf = grad_f(mesh.map_point(t, q.bary));
            let d = [gy[0] - gf[0], gy[1] - gf[1]];
            s += q.weight * area * dot(d, d);
        }
    }
    let gauss = gauss5();
    for (e, edge) in mesh.edges().iter().enumerate() {
        let h = edge.length;
        let n = edge.normal;
        let (jump, _) = y.jump_average(e);
        let (count, dn_h) = match edge.minus {
            Some(m) => (
                2.0,
                0.5 * (dot(y.gradient(edge.plus.element), n) + dot(y.gradient(m.element), n)),
            ),
            None => (1.0, dot(y.gradient(edge.plus.element), n)),
        };
        let mut acc = 0.0;
        for &(sq, w) in &gauss {
            let p = mesh.edge_point(e, sq);
            let j = if edge.is_boundary() {
                jump.at(sq) - f(p)
            } else {
                jump.at(sq)
            };
            let a = dn_h - dot(grad_f(p), n);
            acc += w * h * (sigma / h * j * j + h / sigma * a * a);
        }
        s += count * acc;
    }
    s.sqrt()
}

/// Matrix `E` with `v^t E v = |||v|||_h²` for DG functions `v`.
pub fn energy_matrix(mesh: &Triangulation, sigma: f64) -> Result<SparseMatrix> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let mut trip = Vec::with_capacity(9 * mesh.num_elements() + 36 * mesh.edges().len());
    for t in 0..mesh.num_elements() {
        let g = mesh.basis_gradients(t);
        let area = mesh.area(t);
        for i in 0..3 {
            for j in 0..3 {
                trip.push((3 * t + i, 3 * t + j, area * dot(g[i], g[j])));
            }
        }
    }
    // edge dofs with jump coefficients at both ends and normal-derivative average weights
    for edge in mesh.edges() {
        let h = edge.length;
        let mut dofs: Vec<(usize, [f64; 2], f64)> = Vec::with_capacity(6);
        let mut add_side = |t: usize, sign: f64, kappa: f64, verts: [usize; 2]| {
            let g = mesh.basis_gradients(t);
            for (i, gi) in g.iter().enumerate() {
                let v = mesh.triangles()[t][i];
                let start = if v == verts[0] { 1.0 } else { 0.0 };
                let end = if v == verts[1] { 1.0 } else { 0.0 };
                dofs.push((3 * t + i, [sign * start, sign * end], kappa * dot(*gi, edge.normal)));
            }
        };
        let (count, kappa) = if edge.is_boundary() { (1.0, 1.0) } else { (2.0, 0.5) };
        add_side(edge.plus.element, 1.0, kappa, edge.vertices);
        if let Some(m) = edge.minus {
            add_side(m.element, -1.0, kappa, edge.vertices);
        }
        for &(a, ja, da) in &dofs {
            for &(b, jb, db) in &dofs {
                // exact integral of the product of two linears on the edge
                let jj = h / 6.0 * (2.0 * ja[0] * jb[0] + ja[0] * jb[1] + ja[1] * jb[0] + 2.0 * ja[1] * jb[1]);
                let v = count * (sigma / h * jj + h / sigma * h * da * db);
                if v != 0.0 {
                    trip.push((a, b, v));
                }
            }
        }
    }
    let n = mesh.num_dofs();
    let mut e = SparseMatrix::from_triplets(n, n, &trip)?;
    e.mark_symmetric(1e-12);
    Ok(e)
}

/// `||v||_h² = (v,v) + β (L_h v, L_h v)`.
pub fn norm_h(v: &DgFunction, disc: &Discretization, beta: f64) -> f64 {
    let m = disc.mass();
    let l = disc.lh(v.values());
    (m.inner(v.values(), v.values()) + beta * m.inner(&l, &l)).sqrt()
}

/// `log2(e_{k-1} / e_k)`; `None` where either error is not positive.
pub fn observed_orders(errors: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| (w[0] > 0.0 && w[1] > 0.0).then(|| (w[0] / w[1]).log2()))
        .collect()
}

/// Mean of the last `k` defined orders of an order sequence.
pub fn mean_tail(orders: &[Option<f64>], k: usize) -> Option<f64> {
    if orders.len() < k || k == 0 {
        return None;
    }
    let tail: Option<Vec<f64>> = orders[orders.len() - k..].iter().copied().collect();
    tail.map(|t| t.iter().sum::<f64>() / k as f64)
}

/// Smallest `c` with `a_h(v,v) >= c |||v|||_h²` over the DG space, from
/// inverse iteration on the symmetric part of `A` against the energy matrix.
/// Returns `-inf` when the symmetric part is not positive definite.
pub fn coercivity_constant(disc: &Discretization) -> Result<f64> {
    let a = disc.stiffness();
    let mut sym = a.add_scaled(0.5, &a.transpose(), 0.5);
    sym.mark_symmetric(0.0);
    let e = energy_matrix(disc.mesh(), disc.sigma())?;
    let chol = match CholeskySolver::new(&sym) {
        Ok(c) => c,
        Err(_) => return Ok(f64::NEG_INFINITY),
    };
    let n = sym.nrows();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let mut rq = f64::INFINITY;
    for _ in 0..500 {
        let ex = e.matvec(&x);
        let y = chol.solve(&ex)?;
        let ey = e.matvec(&y);
        let norm = dot_vec(&y, &ey).sqrt();
        if !(norm > 0.0) {
            return Err(Error::LinearSolver("inverse iteration collapsed".into()));
        }
        x = y.iter().map(|v| v / norm).collect();
        let ax = sym.matvec(&x);
        let ex = e.matvec(&x);
        let next = dot_vec(&x, &ax) / dot_vec(&x, &ex);
        if (rq - next).abs() <= 1e-12 * next.abs() {
            return Ok(next);
        }
        rq = next;
    }
    Ok(rq)
}

fn dot_vec(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
