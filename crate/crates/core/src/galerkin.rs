//! Unconstrained solves: the DG state equation, the Ritz projection, and the
//! continuous P1 reference solve for the singular obstacle component.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::assembly::{Coefficients, Discretization};
use crate::dg::{trace_locals, DgFunction};
use crate::error::{Error, Result};
use crate::mesh::{dot, triangulate_graded, Point, PointLocator, PolygonalDomain, Triangulation};
use crate::quadrature::{gauss5, TRIANGLE_DEGREE4, TRIANGLE_DEGREE6};
use crate::sparse::{LuSolver, SparseMatrix};

/// Solves `a_h(y, v) + (boundary terms)(v) = (u, v)` for all DG `v`.
pub fn solve_state(disc: &Discretization, u: impl Fn(Point) -> f64) -> Result<DgFunction> {
    let mut rhs = disc.load(u);
    rhs.iter_mut().zip(disc.boundary_vector()).for_each(|(r, g)| *r -= g);
    let y = LuSolver::new(disc.stiffness())?.solve(&rhs)?;
    DgFunction::new(disc.mesh().clone(), y)
}

/// `a_h(w, phi_i)` for a smooth `w`: interior jumps of `w` vanish and its
/// normal-derivative averages are the exact normal derivatives.
pub fn smooth_form_vector(
    disc: &Discretization,
    w: &dyn Fn(Point) -> f64,
    grad_w: &dyn Fn(Point) -> Point,
) -> Vec<f64> {
    let mesh = disc.mesh();
    let coeffs = disc.coefficients();
    let sigma = disc.sigma();
    let mut out = vec![0.0; mesh.num_dofs()];
    for t in 0..mesh.num_elements() {
        let g = mesh.basis_gradients(t);
        let area = mesh.area(t);
        for q in &TRIANGLE_DEGREE6 {
            let p = mesh.map_point(t, q.bary);
            let gw = grad_w(p);
            let lower = dot(coeffs.zeta(p), gw) + coeffs.gamma(p) * w(p);
            for i in 0..3 {
                out[3 * t + i] += q.weight * area * (dot(gw, g[i]) + lower * q.bary[i]);
            }
        }
    }
    let gauss = gauss5();
    for (e, edge) in mesh.edges().iter().enumerate() {
        let h = edge.length;
        let boundary = edge.is_boundary();
        let inflow = disc.inflow().is_inflow(e);
        let mut sides = vec![(trace_locals(edge, true), 1.0)];
        if !boundary {
            sides.push((trace_locals(edge, false), -1.0));
        }
        let kappa = if boundary { 1.0 } else { 0.5 };
        for &(s, wq) in &gauss {
            let p = mesh.edge_point(e, s);
            let dnw = dot(grad_w(p), edge.normal);
            let wv = if boundary { w(p) } else { 0.0 };
            let zn = if inflow { dot(coeffs.zeta(p), edge.normal) } else { 0.0 };
            for &((t, [a, b]), eps) in &sides {
                let g = mesh.basis_gradients(t);
                let mut phi = [0.0; 3];
                phi[a] = 1.0 - s;
                phi[b] = s;
                for i in 0..3 {
                    let jump_v = eps * phi[i];
                    let avg_dn_v = kappa * dot(g[i], edge.normal);
                    let v = -dnw * jump_v - avg_dn_v * wv + sigma / h * wv * jump_v - zn * wv * phi[i];
                    out[3 * t + i] += wq * h * v;
                }
            }
        }
    }
    out
}

/// DG function `r` with `a_h(r, v) = a_h(w, v)` for all DG `v`.
pub fn ritz_project(
    disc: &Discretization,
    w: &dyn Fn(Point) -> f64,
    grad_w: &dyn Fn(Point) -> Point,
) -> Result<DgFunction> {
    let rhs = smooth_form_vector(disc, w, grad_w);
    let r = LuSolver::new(disc.stiffness())?.solve(&rhs)?;
    DgFunction::new(disc.mesh().clone(), r)
}

/// Continuous piecewise-linear field on its own mesh, evaluable anywhere in
/// the domain by point location.
#[derive(Debug, Clone)]
pub struct ReferenceField {
    mesh: Arc<Triangulation>,
    values: Vec<f64>,
    locator: PointLocator,
    level: usize,
    mu: f64,
}

impl ReferenceField {
    pub fn new(mesh: Arc<Triangulation>, values: Vec<f64>, mu: f64) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_vertices(),
                actual: values.len(),
            });
        }
        let locator = PointLocator::new(&mesh);
        let level = mesh.level();
        Ok(Self {
            mesh,
            values,
            locator,
            level,
            mu,
        })
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn vertex_values(&self) -> &[f64] {
        &self.values
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn locate(&self, p: Point) -> Result<(usize, [f64; 3])> {
        self.locator
            .locate(&self.mesh, p)
            .ok_or(Error::PointOutsideDomain(p[0], p[1]))
    }

    pub fn value(&self, p: Point) -> Result<f64> {
        let (t, b) = self.locate(p)?;
        let tri = self.mesh.triangles()[t];
        Ok((0..3).map(|k| b[k] * self.values[tri[k]]).sum())
    }

    /// Gradient of the element containing `p` (one of them on element boundaries).
    pub fn gradient(&self, p: Point) -> Result<Point> {
        let (t, _) = self.locate(p)?;
        let tri = self.mesh.triangles()[t];
        let g = self.mesh.basis_gradients(t);
        Ok([
            (0..3).map(|k| g[k][0] * self.values[tri[k]]).sum(),
            (0..3).map(|k| g[k][1] * self.values[tri[k]]).sum(),
        ])
    }

    /// Text format: header `psi_s <level> <mu> <num_vertices>` then one value per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "psi_s {} {} {}", self.level, self.mu, self.values.len())?;
        for v in &self.values {
            writeln!(w, "{v:.17e}")?;
        }
        Ok(())
    }

    /// Reads values written by [`ReferenceField::write_text`] and rebuilds the
    /// graded mesh of the recorded level on `domain`.
    pub fn read_text<R: BufRead>(domain: &PolygonalDomain, r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::MissingReference("empty file".into()))??;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let bad = || Error::MissingReference(format!("malformed header '{header}'"));
        if parts.len() != 4 || parts[0] != "psi_s" {
            return Err(bad());
        }
        let level: usize = parts[1].parse().map_err(|_| bad())?;
        let mu: f64 = parts[2].parse().map_err(|_| bad())?;
        let n: usize = parts[3].parse().map_err(|_| bad())?;
        let mut values = Vec::with_capacity(n);
        for line in lines.take(n) {
            let line = line?;
            values.push(
                line.trim()
                    .parse()
                    .map_err(|_| Error::MissingReference(format!("bad value '{line}'")))?,
            );
        }
        let mesh = Arc::new(reference_mesh(domain, level, mu)?);
        Self::new(mesh, values, mu)
    }
}

fn reference_mesh(domain: &PolygonalDomain, level: usize, mu: f64) -> Result<Triangulation> {
    triangulate_graded(domain, level, &crate::mesh::default_grading(domain, mu))
}

/// Continuous P1 Galerkin solution of `L psi = 0` with `psi = 1` on the
/// boundary (imposed strongly), on the graded mesh of the given level.
pub fn compute_singular_obstacle(
    domain: &PolygonalDomain,
    coeffs: &Coefficients,
    level: usize,
    mu: f64,
) -> Result<ReferenceField> {
    let mesh = Arc::new(reference_mesh(domain, level, mu)?);
    coeffs.check(&mesh)?;
    let values = solve_conforming_dirichlet(&mesh, coeffs, &|_| 1.0)?;
    ReferenceField::new(mesh, values, mu)
}

/// Conforming P1 solve of `L y = 0` with Dirichlet data `g` at boundary vertices.
pub fn solve_conforming_dirichlet(
    mesh: &Triangulation,
    coeffs: &Coefficients,
    g: &dyn Fn(Point) -> f64,
) -> Result<Vec<f64>> {
    let nv = mesh.num_vertices();
    let mut map = vec![usize::MAX; nv];
    let mut free = 0;
    for (v, m) in map.iter_mut().enumerate() {
        if !mesh.is_boundary_vertex(v) {
            *m = free;
            free += 1;
        }
    }
    let mut values: Vec<f64> = (0..nv)
        .map(|v| {
            if mesh.is_boundary_vertex(v) {
                g(mesh.points()[v])
            } else {
                0.0
            }
        })
        .collect();
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    let mut rhs = vec![0.0; free];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let grads = mesh.basis_gradients(t);
        let area = mesh.area(t);
        let mut block = [[0.0; 3]; 3];
        for (i, row) in block.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = area * dot(grads[i], grads[j]);
            }
        }
        for q in &TRIANGLE_DEGREE4 {
            let p = mesh.map_point(t, q.bary);
            let z = coeffs.zeta(p);
            let gam = coeffs.gamma(p);
            for (i, row) in block.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += q.weight * area * (dot(z, grads[j]) + gam * q.bary[j]) * q.bary[i];
                }
            }
        }
        for i in 0..3 {
            let r = map[tri[i]];
            if r == usize::MAX {
                continue;
            }
            for j in 0..3 {
                let c = map[tri[j]];
                if c == usize::MAX {
                    rhs[r] -= block[i][j] * values[tri[j]];
                } else {
                    triplets.push((r, c, block[i][j]));
                }
            }
        }
    }
    if free > 0 {
        let k = SparseMatrix::from_triplets(free, free, &triplets)?;
        let x = LuSolver::new(&k)?.solve(&rhs)?;
        for v in 0..nv {
            if map[v] != usize::MAX {
                values[v] = x[map[v]];
            }
        }
    }
    Ok(values)
}
