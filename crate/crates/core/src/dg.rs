//! Piecewise-linear discontinuous functions with a per-element vertex-nodal
//! basis, continuous P1 functions, and the transfer operators between them.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Edge, Point, Triangulation};
use crate::quadrature::{QuadPoint, TRIANGLE_DEGREE6};

/// Values of a DG function; dof `3 t + k` is the value of `v|_T` at local vertex `k`.
#[derive(Debug, Clone)]
pub struct DgFunction {
    mesh: Arc<Triangulation>,
    values: Vec<f64>,
}

/// A linear function on an edge, given by its values at the edge's start
/// and end vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeLinear {
    pub start: f64,
    pub end: f64,
}

impl EdgeLinear {
    pub fn at(&self, s: f64) -> f64 {
        (1.0 - s) * self.start + s * self.end
    }
}

/// Local vertex indices of `element` at the start and end of the edge.
pub(crate) fn trace_locals(edge: &Edge, plus: bool) -> (usize, [usize; 2]) {
    if plus {
        let k = edge.plus.local;
        (edge.plus.element, [k, (k + 1) % 3])
    } else {
        let m = edge.minus.expect("interior edge");
        // the neighbour traverses the edge in the opposite direction
        (m.element, [(m.local + 1) % 3, m.local])
    }
}

impl DgFunction {
    pub fn new(mesh: Arc<Triangulation>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_dofs(),
                actual: values.len(),
            });
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Arc<Triangulation>) -> Self {
        let n = mesh.num_dofs();
        Self {
            mesh,
            values: vec![0.0; n],
        }
    }

    /// Samples `f` at the vertices of every element.
    pub fn from_vertex_values(mesh: Arc<Triangulation>, f: impl Fn(Point) -> f64) -> Self {
        let values = mesh
            .triangles()
            .iter()
            .flat_map(|tri| tri.map(|v| f(mesh.points()[v])))
            .collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn local(&self, t: usize) -> [f64; 3] {
        [self.values[3 * t], self.values[3 * t + 1], self.values[3 * t + 2]]
    }

    pub fn eval(&self, t: usize, bary: [f64; 3]) -> f64 {
        let v = self.local(t);
        v[0] * bary[0] + v[1] * bary[1] + v[2] * bary[2]
    }

    pub fn gradient(&self, t: usize) -> Point {
        let g = self.mesh.basis_gradients(t);
        let v = self.local(t);
        [
            v[0] * g[0][0] + v[1] * g[1][0] + v[2] * g[2][0],
            v[0] * g[0][1] + v[1] * g[1][1] + v[2] * g[2][1],
        ]
    }

    /// Trace of `v|_T` on edge `e` from the plus (`true`) or minus side.
    pub fn trace(&self, e: usize, plus: bool) -> EdgeLinear {
        let (t, [a, b]) = trace_locals(&self.mesh.edges()[e], plus);
        EdgeLinear {
            start: self.values[3 * t + a],
            end: self.values[3 * t + b],
        }
    }

    /// `([v], {v})` on edge `e`; on boundary edges both are the one-sided trace.
    pub fn jump_average(&self, e: usize) -> (EdgeLinear, EdgeLinear) {
        let p = self.trace(e, true);
        if self.mesh.edges()[e].is_boundary() {
            return (p, p);
        }
        let m = self.trace(e, false);
        (
            EdgeLinear {
                start: p.start - m.start,
                end: p.end - m.end,
            },
            EdgeLinear {
                start: 0.5 * (p.start + m.start),
                end: 0.5 * (p.end + m.end),
            },
        )
    }

    /// CSV with columns `element,local_vertex,x,y,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "element,local_vertex,x,y,value")?;
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            for (k, &v) in tri.iter().enumerate() {
                let p = self.mesh.points()[v];
                writeln!(w, "{t},{k},{:.17e},{:.17e},{:.17e}", p[0], p[1], self.values[3 * t + k])?;
            }
        }
        Ok(())
    }
}

/// Continuous piecewise-linear function with one value per mesh vertex.
#[derive(Debug, Clone)]
pub struct ConformingFunction {
    mesh: Arc<Triangulation>,
    values: Vec<f64>,
    zero_trace: bool,
}

impl ConformingFunction {
    pub fn new(mesh: Arc<Triangulation>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_vertices(),
                actual: values.len(),
            });
        }
        let zero_trace = (0..values.len()).all(|v| !mesh.is_boundary_vertex(v) || values[v] == 0.0);
        Ok(Self {
            mesh,
            values,
            zero_trace,
        })
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Whether every boundary vertex carries the value zero.
    pub fn zero_trace(&self) -> bool {
        self.zero_trace
    }

    pub fn to_dg(&self) -> DgFunction {
        let values = self
            .mesh
            .triangles()
            .iter()
            .flat_map(|tri| tri.map(|v| self.values[v]))
            .collect();
        DgFunction {
            mesh: self.mesh.clone(),
            values,
        }
    }
}

/// Continuous nodal interpolant.
pub fn interpolate_nodal(mesh: &Arc<Triangulation>, w: impl Fn(Point) -> f64) -> ConformingFunction {
    let values = mesh.points().iter().map(|&p| w(p)).collect();
    ConformingFunction::new(mesh.clone(), values).expect("one value per vertex")
}

/// `b_i = (f, phi_i)` with the supplied triangle rule.
pub fn load_vector(mesh: &Triangulation, f: impl Fn(Point) -> f64, rule: &[QuadPoint]) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_dofs()];
    for t in 0..mesh.num_elements() {
        let area = mesh.area(t);
        for q in rule {
            let fx = f(mesh.map_point(t, q.bary)) * q.weight * area;
            for k in 0..3 {
                b[3 * t + k] += fx * q.bary[k];
            }
        }
    }
    b
}

/// Inverse of the local P1 mass matrix `(area / 12) (I + J)`.
#[inline]
pub(crate) fn local_mass_inverse_apply(area: f64, r: [f64; 3]) -> [f64; 3] {
    let s = r[0] + r[1] + r[2];
    [
        (12.0 * r[0] - 3.0 * s) / area,
        (12.0 * r[1] - 3.0 * s) / area,
        (12.0 * r[2] - 3.0 * s) / area,
    ]
}

/// L2 projection onto the DG space, computed element by element.
pub fn l2_project(mesh: &Arc<Triangulation>, f: impl Fn(Point) -> f64) -> DgFunction {
    let mut v = load_vector(mesh, f, &TRIANGLE_DEGREE6);
    for t in 0..mesh.num_elements() {
        let x = local_mass_inverse_apply(mesh.area(t), [v[3 * t], v[3 * t + 1], v[3 * t + 2]]);
        v[3 * t..3 * t + 3].copy_from_slice(&x);
    }
    DgFunction {
        mesh: mesh.clone(),
        values: v,
    }
}

/// Transfers `coarse` to the mesh one uniform refinement finer, whose element
/// `4t + k` is a child of coarse element `t`. On graded meshes the child
/// vertices are only approximately inside the parent, so barycentric
/// coordinates are clipped.
pub fn prolongate(coarse: &DgFunction, fine: &Arc<Triangulation>) -> Result<DgFunction> {
    let cm = coarse.mesh();
    if fine.num_elements() != 4 * cm.num_elements() {
        return Err(Error::DimensionMismatch {
            expected: 4 * cm.num_elements(),
            actual: fine.num_elements(),
        });
    }
    let mut values = vec![0.0; fine.num_dofs()];
    for (f, tri) in fine.triangles().iter().enumerate() {
        let t = f / 4;
        for (k, &v) in tri.iter().enumerate() {
            let mut b = cm.barycentric(t, fine.points()[v]).map(|x| x.max(0.0));
            let s: f64 = b.iter().sum();
            b.iter_mut().for_each(|x| *x /= s);
            values[3 * f + k] = coarse.eval(t, b);
        }
    }
    DgFunction::new(fine.clone(), values)
}

/// Averages the element values at every interior vertex; boundary vertices get zero.
pub fn connect(y: &DgFunction) -> ConformingFunction {
    let mesh = y.mesh();
    let mut sum = vec![0.0; mesh.num_vertices()];
    let mut count = vec![0usize; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for (k, &v) in tri.iter().enumerate() {
            sum[v] += y.values[3 * t + k];
            count[v] += 1;
        }
    }
    let values = (0..mesh.num_vertices())
        .map(|v| {
            if mesh.is_boundary_vertex(v) {
                0.0
            } else {
                sum[v] / count[v] as f64
            }
        })
        .collect();
    ConformingFunction {
        mesh: mesh.clone(),
        values,
        zero_trace: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{triangulate_uniform, PolygonalDomain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(level: usize) -> Arc<Triangulation> {
        Arc::new(triangulate_uniform(&PolygonalDomain::square(-4.0, 4.0), level).unwrap())
    }

    fn l2(v: &DgFunction, f: impl Fn(Point) -> f64) -> f64 {
        let m = v.mesh();
        let mut s = 0.0;
        for t in 0..m.num_elements() {
            for q in &TRIANGLE_DEGREE6 {
                let d = v.eval(t, q.bary) - f(m.map_point(t, q.bary));
                s += q.weight * m.area(t) * d * d;
            }
        }
        s.sqrt()
    }

    #[test]
    fn conforming_embedding_has_zero_interior_jumps() {
        let m = square(2);
        let c = interpolate_nodal(&m, |p| p[0] * p[1] + 2.0);
        let d = c.to_dg();
        for (e, edge) in m.edges().iter().enumerate() {
            let (j, a) = d.jump_average(e);
            if edge.is_boundary() {
                assert_eq!(j, a);
            } else {
                assert_eq!((j.start, j.end), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn constant_jump_and_average() {
        let m = Arc::new(
            Triangulation::from_raw(
                vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                vec![[0, 1, 2], [0, 2, 3]],
            )
            .unwrap(),
        );
        let e = m.edges().iter().position(|e| !e.is_boundary()).unwrap();
        let plus = m.edges()[e].plus.element;
        let mut v = DgFunction::zeros(m.clone());
        for t in 0..2 {
            let c = if t == plus { 1.0 } else { 3.0 };
            v.values_mut()[3 * t..3 * t + 3].fill(c);
        }
        let (j, a) = v.jump_average(e);
        assert_eq!(j, EdgeLinear { start: -2.0, end: -2.0 });
        assert_eq!(a, EdgeLinear { start: 2.0, end: 2.0 });
    }

    #[test]
    fn boundary_trace_matches_endpoints() {
        let m = square(1);
        let v = DgFunction::from_vertex_values(m.clone(), |p| 2.0 * p[0] - p[1]);
        for (e, edge) in m.edges().iter().enumerate().filter(|(_, e)| e.is_boundary()) {
            let (j, a) = v.jump_average(e);
            let [s, t] = edge.vertices.map(|i| m.points()[i]);
            assert_eq!(j, a);
            assert_eq!(j.start, 2.0 * s[0] - s[1]);
            assert_eq!(j.end, 2.0 * t[0] - t[1]);
        }
    }

    #[test]
    fn interpolation_reproduces_linears() {
        let m = square(2);
        let f = |p: Point| 3.0 * p[0] - 2.0 * p[1] + 1.0;
        let d = interpolate_nodal(&m, f).to_dg();
        for t in 0..m.num_elements() {
            for q in &TRIANGLE_DEGREE6 {
                assert!((d.eval(t, q.bary) - f(m.map_point(t, q.bary))).abs() <= 1e-13);
            }
        }
        assert!(interpolate_nodal(&m, |_| 0.0).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interpolation_error_order_two() {
        let f = |p: Point| p[0] * p[0];
        let errs: Vec<f64> = (1..5)
            .map(|k| {
                let m = square(k);
                l2(&interpolate_nodal(&m, f).to_dg(), f)
            })
            .collect();
        for w in errs.windows(2) {
            assert!(((w[0] / w[1]).log2() - 2.0).abs() < 0.05, "{errs:?}");
        }
    }

    #[test]
    fn projection_properties() {
        let m = square(2);
        let v = DgFunction::from_vertex_values(m.clone(), |p| p[0] - 0.5 * p[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // idempotence on a discontinuous member
        let mut w = v.clone();
        for x in w.values_mut() {
            *x += rng.random_range(-1.0..1.0);
        }
        let ww = w.clone();
        let p = l2_project(&m, |x| {
            let t = (0..m.num_elements())
                .find(|&t| m.barycentric(t, x).iter().all(|&b| b >= -1e-12))
                .unwrap();
            ww.eval(t, m.barycentric(t, x))
        });
        // quadrature points are interior, so location is unambiguous
        for (a, b) in p.values().iter().zip(w.values()) {
            assert!((a - b).abs() < 1e-13);
        }
        let c = l2_project(&m, |_| 2.5);
        assert!(c.values().iter().all(|&x| (x - 2.5).abs() < 1e-13));
    }

    #[test]
    fn projection_residual_is_orthogonal() {
        let m = square(2);
        let f = |p: Point| p[0].sin();
        let q = l2_project(&m, f);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let v: Vec<f64> = (0..m.num_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v = DgFunction::new(m.clone(), v).unwrap();
            let mut s = 0.0;
            for t in 0..m.num_elements() {
                for qp in &TRIANGLE_DEGREE6 {
                    let x = m.map_point(t, qp.bary);
                    s += qp.weight * m.area(t) * (f(x) - q.eval(t, qp.bary)) * v.eval(t, qp.bary);
                }
            }
            assert!(s.abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn connect_averages_and_round_trips() {
        let m = square(2);
        let c = interpolate_nodal(&m, |p| (16.0 - p[0] * p[0]) * (16.0 - p[1] * p[1]));
        assert!(c.zero_trace());
        let back = connect(&c.to_dg());
        for (a, b) in back.values().iter().zip(c.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        // interior vertex with four incident triangles carrying 1, 2, 3, 6
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let tris = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]];
        let star = Arc::new(Triangulation::from_raw(pts, tris).unwrap());
        let mut y = DgFunction::zeros(star.clone());
        for (t, v) in [1.0, 2.0, 3.0, 6.0].into_iter().enumerate() {
            y.values_mut()[3 * t] = v;
        }
        let cy = connect(&y);
        assert_eq!(cy.values()[0], 3.0);
        assert!(cy.values()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_export_rows() {
        let m = square(0);
        let v = DgFunction::zeros(m.clone());
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 1 + 3 * m.num_elements());
        assert!(s.starts_with("element,local_vertex,x,y,value"));
    }

    #[test]
    fn prolongation_is_exact_for_nested_spaces() {
        let d = PolygonalDomain::square(-4.0, 4.0);
        let c = Arc::new(triangulate_uniform(&d, 1).unwrap());
        let f = Arc::new(c.refine_uniform().unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = DgFunction::new(
            c.clone(),
            (0..c.num_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let z = prolongate(&y, &f).unwrap();
        for ft in 0..f.num_elements() {
            let p = f.centroid(ft);
            let t = ft / 4;
            let a = y.eval(t, c.barycentric(t, p));
            let b = z.eval(ft, [1.0 / 3.0; 3]);
            assert!((a - b).abs() < 1e-13);
        }
        assert!(prolongate(&z, &c).is_err());
    }
}
