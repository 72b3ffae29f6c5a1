//! Conforming triangulations of polygonal domains: built-in coarse templates,
//! red refinement, radial grading toward reentrant corners, edge topology and
//! inflow/outflow classification.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub(crate) fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corner {
    pub index: usize,
    pub position: Point,
    /// Interior angle in radians.
    pub angle: f64,
    pub reentrant: bool,
}

/// Shapes for which a coarse template mesh is built in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainShape {
    /// `[lo, hi]^2`, template of 4x4 cells.
    Square {
        lo: f64,
        hi: f64,
    },
    /// `[-half, half]^2 \ [0, half] x [-half, 0]`, template of three blocks of 2x2 cells.
    LShape {
        half: f64,
    },
    Other,
}

/// A simple polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonalDomain {
    vertices: Vec<Point>,
    corners: Vec<Corner>,
    shape: DomainShape,
}

impl PolygonalDomain {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidPolygon(format!("{n} vertices")));
        }
        let signed_area = polygon_signed_area(&vertices);
        if signed_area <= 0.0 {
            return Err(Error::InvalidPolygon(
                "vertices must be ordered counterclockwise".into(),
            ));
        }
        // no two non-adjacent sides may touch
        for i in 0..n {
            for j in (i + 1)..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_intersect(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]) {
                    return Err(Error::InvalidPolygon(format!("sides {i} and {j} intersect")));
                }
            }
        }
        let corners = (0..n)
            .map(|i| {
                let prev = vertices[(i + n - 1) % n];
                let cur = vertices[i];
                let next = vertices[(i + 1) % n];
                let d_in = sub(cur, prev);
                let d_out = sub(next, cur);
                let turn = cross(d_in, d_out).atan2(dot(d_in, d_out));
                let angle = PI - turn;
                Corner {
                    index: i,
                    position: cur,
                    angle,
                    reentrant: angle > PI + 1e-12,
                }
            })
            .collect();
        let shape = detect_shape(&vertices);
        Ok(Self {
            vertices,
            corners,
            shape,
        })
    }

    pub fn square(lo: f64, hi: f64) -> Self {
        Self::new(vec![[lo, lo], [hi, lo], [hi, hi], [lo, hi]]).expect("valid square")
    }

    pub fn lshape(half: f64) -> Self {
        let h = half;
        Self::new(vec![[-h, -h], [0.0, -h], [0.0, 0.0], [h, 0.0], [h, h], [-h, h]]).expect("valid L-shape")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn corners(&self) -> &[Corner] {
        &self.corners
    }

    pub fn shape(&self) -> DomainShape {
        self.shape
    }

    pub fn area(&self) -> f64 {
        polygon_signed_area(&self.vertices)
    }

    pub fn num_sides(&self) -> usize {
        self.vertices.len()
    }

    /// Side `s` runs from vertex `s` to vertex `s + 1`.
    pub fn side(&self, s: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[s], self.vertices[(s + 1) % n])
    }

    /// Index of the side containing both points, if any.
    pub fn side_containing(&self, a: Point, b: Point) -> Option<usize> {
        (0..self.num_sides()).find(|&s| {
            let (p, q) = self.side(s);
            on_segment(a, p, q) && on_segment(b, p, q)
        })
    }

    pub fn contains(&self, p: Point) -> bool {
        // winding test; boundary points count as inside
        let n = self.vertices.len();
        if (0..n).any(|s| {
            let (a, b) = self.side(s);
            on_segment(p, a, b)
        }) {
            return true;
        }
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Distance from a corner to the nearest side not incident to it.
    fn clearance(&self, corner: usize) -> f64 {
        let n = self.vertices.len();
        let c = self.vertices[corner];
        (0..n)
            .filter(|&s| s != corner && (s + 1) % n != corner)
            .map(|s| {
                let (a, b) = self.side(s);
                point_segment_distance(c, a, b)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn polygon_signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| cross(v[i], v[(i + 1) % n])).sum::<f64>()
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if cross(ab, sub(p, a)).abs() > 1e-10 * len2 {
        return false;
    }
    let t = dot(sub(p, a), ab) / len2;
    (-1e-10..=1.0 + 1e-10).contains(&t)
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(sub(q2, q1), sub(p1, q1));
    let d2 = cross(sub(q2, q1), sub(p2, q1));
    let d3 = cross(sub(p2, p1), sub(q1, p1));
    let d4 = cross(sub(p2, p1), sub(q2, p1));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(p1, q1, q2) || on_segment(p2, q1, q2) || on_segment(q1, p1, p2) || on_segment(q2, p1, p2)
}

fn detect_shape(v: &[Point]) -> DomainShape {
    let eq = |a: Point, b: Point| dist(a, b) < 1e-12 * (1.0 + a[0].abs() + a[1].abs());
    if v.len() == 4 {
        let (lo, hi) = (v[0][0], v[1][0]);
        if hi > lo && eq(v[0], [lo, lo]) && eq(v[1], [hi, lo]) && eq(v[2], [hi, hi]) && eq(v[3], [lo, hi]) {
            return DomainShape::Square { lo, hi };
        }
    }
    if v.len() == 6 {
        let h = v[4][0];
        let expected = [[-h, -h], [0.0, -h], [0.0, 0.0], [h, 0.0], [h, h], [-h, h]];
        if h > 0.0 && v.iter().zip(expected).all(|(&a, b)| eq(a, b)) {
            return DomainShape::LShape { half: h };
        }
    }
    DomainShape::Other
}

/// One side of an edge: the element and the local edge index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeSide {
    pub element: usize,
    /// Local edge `k` joins local vertices `k` and `(k + 1) % 3`.
    pub local: usize,
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoints in the counterclockwise order of `plus`.
    pub vertices: [usize; 2],
    /// Unit normal, outward for `plus`.
    pub normal: Point,
    pub length: f64,
    pub plus: EdgeSide,
    /// `None` on the boundary.
    pub minus: Option<EdgeSide>,
    /// Polygon side index for boundary edges when the domain is known.
    pub boundary_tag: Option<usize>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.minus.is_none()
    }
}

/// Grading metadata for one corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerGrading {
    pub position: Point,
    pub mu: f64,
    /// Radius of the remapped disk around the corner.
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    points: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    element_edges: Vec<[usize; 3]>,
    vertex_elements: Vec<Vec<usize>>,
    boundary_vertex: Vec<bool>,
    domain: Option<PolygonalDomain>,
    level: usize,
    /// Mesh size of the uniform mesh the triangulation was derived from.
    nominal_h: f64,
    grading: Vec<CornerGrading>,
}

impl Triangulation {
    /// Builds the topology for an arbitrary conforming triangle list.
    /// Clockwise triangles are reoriented.
    pub fn from_raw(points: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut mesh = Self::build(points, triangles, None)?;
        mesh.nominal_h = mesh.h();
        Ok(mesh)
    }

    fn build(points: Vec<Point>, mut triangles: Vec<[usize; 3]>, domain: Option<PolygonalDomain>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= points.len() {
                    return Err(Error::IndexOutOfRange {
                        index: v,
                        len: points.len(),
                    });
                }
            }
            let area2 = cross(sub(points[tri[1]], points[tri[0]]), sub(points[tri[2]], points[tri[0]]));
            let scale = dist(points[tri[1]], points[tri[0]]).powi(2).max(f64::MIN_POSITIVE);
            if area2.abs() <= 1e-14 * scale {
                return Err(Error::DegenerateElement {
                    element: t,
                    area: 0.5 * area2.abs(),
                });
            }
            if area2 < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 3 / 2 + 8);
        let mut element_edges = vec![[usize::MAX; 3]; triangles.len()];
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                match lookup.get(&key) {
                    None => {
                        let (pa, pb) = (points[a], points[b]);
                        let length = dist(pa, pb);
                        let d = sub(pb, pa);
                        edges.push(Edge {
                            vertices: [a, b],
                            normal: [d[1] / length, -d[0] / length],
                            length,
                            plus: EdgeSide { element: t, local: k },
                            minus: None,
                            boundary_tag: None,
                        });
                        lookup.insert(key, edges.len() - 1);
                        element_edges[t][k] = edges.len() - 1;
                    }
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.minus.is_some() {
                            return Err(Error::InvalidMesh(format!(
                                "edge ({a}, {b}) shared by more than two triangles"
                            )));
                        }
                        if edge.vertices != [b, a] {
                            return Err(Error::InvalidMesh(format!(
                                "inconsistent orientation across edge ({a}, {b})"
                            )));
                        }
                        edge.minus = Some(EdgeSide { element: t, local: k });
                        element_edges[t][k] = e;
                    }
                }
            }
        }

        let mut vertex_elements = vec![Vec::new(); points.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_elements[v].push(t);
            }
        }
        let mut boundary_vertex = vec![false; points.len()];
        for e in edges.iter_mut() {
            if e.minus.is_none() {
                boundary_vertex[e.vertices[0]] = true;
                boundary_vertex[e.vertices[1]] = true;
                e.boundary_tag = match &domain {
                    Some(d) => d.side_containing(points[e.vertices[0]], points[e.vertices[1]]),
                    None => Some(0),
                };
                if e.boundary_tag.is_none() {
                    return Err(Error::InvalidMesh(format!(
                        "boundary edge ({}, {}) not on the domain boundary",
                        e.vertices[0], e.vertices[1]
                    )));
                }
            }
        }

        Ok(Self {
            points,
            triangles,
            edges,
            element_edges,
            vertex_elements,
            boundary_vertex,
            domain,
            level: 0,
            nominal_h: 0.0,
            grading: Vec::new(),
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.points.len()
    }

    /// Number of DG degrees of freedom (three per triangle).
    pub fn num_dofs(&self) -> usize {
        3 * self.triangles.len()
    }

    pub fn element_edges(&self, t: usize) -> [usize; 3] {
        self.element_edges[t]
    }

    pub fn vertex_elements(&self, v: usize) -> &[usize] {
        &self.vertex_elements[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn domain(&self) -> Option<&PolygonalDomain> {
        self.domain.as_ref()
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn grading(&self) -> &[CornerGrading] {
        &self.grading
    }

    /// Mesh size of the underlying uniform hierarchy level.
    pub fn nominal_h(&self) -> f64 {
        self.nominal_h
    }

    pub fn vertices_of(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.points[a], self.points[b], self.points[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices_of(t);
        0.5 * cross(sub(b, a), sub(c, a))
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.vertices_of(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Diameter of triangle `t` (longest edge).
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices_of(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Maximum element diameter.
    pub fn h(&self) -> f64 {
        (0..self.num_elements()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|t| self.area(t)).sum()
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = PI;
        for t in 0..self.num_elements() {
            let v = self.vertices_of(t);
            for k in 0..3 {
                let a = sub(v[(k + 1) % 3], v[k]);
                let b = sub(v[(k + 2) % 3], v[k]);
                min = min.min(cross(a, b).abs().atan2(dot(a, b)));
            }
        }
        min
    }

    /// Point on the segment of edge `e` at parameter `s` in `[0, 1]`.
    pub fn edge_point(&self, e: usize, s: f64) -> Point {
        let [a, b] = self.edges[e].vertices;
        let (pa, pb) = (self.points[a], self.points[b]);
        [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.vertices_of(t);
        let det = cross(sub(b, a), sub(c, a));
        let l1 = cross(sub(p, a), sub(c, a)) / det;
        let l2 = cross(sub(b, a), sub(p, a)) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Physical point from barycentric coordinates in triangle `t`.
    pub fn map_point(&self, t: usize, bary: [f64; 3]) -> Point {
        let v = self.vertices_of(t);
        [
            bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
            bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
        ]
    }

    /// Gradients of the three barycentric (nodal P1) basis functions of `t`.
    pub fn basis_gradients(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.vertices_of(t);
        let det = cross(sub(b, a), sub(c, a));
        // grad lambda_i = rot(opposite edge) / (2 area)
        let g = |p: Point, q: Point| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
        [g(b, c), g(c, a), g(a, b)]
    }

    /// Φ_μ(T) = Π_l |c_l − c_T|^{1−μ_l} over the graded corners.
    pub fn grading_weight(&self, t: usize) -> f64 {
        let c = self.centroid(t);
        self.grading
            .iter()
            .map(|g| dist(g.position, c).powf(1.0 - g.mu))
            .product()
    }

    /// Red refinement: every triangle is split into four by its edge midpoints.
    /// Child `4 t + k` of parent `t` is the corner child at local vertex `k`
    /// for `k < 3` and the interior child for `k = 3`.
    pub fn refine_uniform(&self) -> Result<Self> {
        let nv = self.points.len();
        let mut points = self.points.clone();
        points.extend(self.edges.iter().map(|e| {
            let (a, b) = (self.points[e.vertices[0]], self.points[e.vertices[1]]);
            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
        }));
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let [e0, e1, e2] = self.element_edges[t];
            let (m01, m12, m20) = (nv + e0, nv + e1, nv + e2);
            triangles.push([tri[0], m01, m20]);
            triangles.push([m01, tri[1], m12]);
            triangles.push([m20, m12, tri[2]]);
            triangles.push([m01, m12, m20]);
        }
        let mut mesh = Self::build(points, triangles, self.domain.clone())?;
        mesh.level = self.level + 1;
        mesh.nominal_h = 0.5 * self.nominal_h;
        Ok(mesh)
    }

    /// Writes the plain-text mesh format: a `points` table, a `triangles`
    /// table and a `boundary` table of (edge, v0, v1, side tag) rows.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# dgocp mesh v1")?;
        writeln!(w, "points {}", self.points.len())?;
        for (i, p) in self.points.iter().enumerate() {
            writeln!(w, "{i} {:.17e} {:.17e}", p[0], p[1])?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{i} {} {} {}", t[0], t[1], t[2])?;
        }
        let boundary: Vec<_> = self.edges.iter().enumerate().filter(|(_, e)| e.is_boundary()).collect();
        writeln!(w, "boundary {}", boundary.len())?;
        for (i, e) in boundary {
            writeln!(
                w,
                "{i} {} {} {}",
                e.vertices[0],
                e.vertices[1],
                e.boundary_tag.unwrap_or(0)
            )?;
        }
        Ok(())
    }
}

/// Whether cell `(i, j)` of the template grid belongs to the domain.
type CellFilter = Box<dyn Fn(usize, usize) -> bool>;

fn template(domain: &PolygonalDomain) -> Result<Triangulation> {
    let (lo, cell, nx, keep): (Point, f64, usize, CellFilter) =
        match domain.shape() {
            DomainShape::Square { lo, hi } => ([lo, lo], (hi - lo) / 4.0, 4, Box::new(|_, _| true)),
            DomainShape::LShape { half } => (
                [-half, -half],
                half / 2.0,
                4,
                // drop the lower-right quadrant
                Box::new(|i, j| !(i >= 2 && j < 2)),
            ),
            DomainShape::Other => {
                return Err(Error::UnsupportedDomain(format!(
                    "no coarse template for polygon with vertices {:?}; built-in templates are the axis-aligned square and the L-shape",
                    domain.vertices()
                )))
            }
        };
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut points = Vec::new();
    let mut triangles = Vec::new();
    let mut vid = |i: usize, j: usize, points: &mut Vec<Point>| -> usize {
        *index.entry((i, j)).or_insert_with(|| {
            points.push([lo[0] + i as f64 * cell, lo[1] + j as f64 * cell]);
            points.len() - 1
        })
    };
    for j in 0..nx {
        for i in 0..nx {
            if !keep(i, j) {
                continue;
            }
            let p00 = vid(i, j, &mut points);
            let p10 = vid(i + 1, j, &mut points);
            let p11 = vid(i + 1, j + 1, &mut points);
            let p01 = vid(i, j + 1, &mut points);
            triangles.push([p00, p10, p11]);
            triangles.push([p00, p11, p01]);
        }
    }
    let mut mesh = Triangulation::build(points, triangles, Some(domain.clone()))?;
    mesh.nominal_h = mesh.h();
    Ok(mesh)
}

/// Level-0 template refined `level` times.
pub fn triangulate_uniform(domain: &PolygonalDomain, level: usize) -> Result<Triangulation> {
    let mut mesh = template(domain)?;
    for _ in 0..level {
        mesh = mesh.refine_uniform()?;
    }
    Ok(mesh)
}

/// Uniform mesh with points near each reentrant corner remapped radially,
/// `r -> R (r / R)^{1/mu}`, so that element sizes scale like `h r^{1-mu}`.
/// `mu` holds one value per polygon corner.
pub fn triangulate_graded(domain: &PolygonalDomain, level: usize, mu: &[f64]) -> Result<Triangulation> {
    if mu.len() != domain.corners().len() {
        return Err(Error::DimensionMismatch {
            expected: domain.corners().len(),
            actual: mu.len(),
        });
    }
    let mut grading = Vec::new();
    for (corner, &m) in domain.corners().iter().zip(mu) {
        let [x, y] = corner.position;
        if corner.reentrant {
            let upper = PI / corner.angle;
            if !(m > 0.5 && m < upper) {
                return Err(Error::InvalidGrading {
                    corner: corner.index,
                    x,
                    y,
                    mu: m,
                    admissible: format!("(0.5, {upper:.6})"),
                });
            }
            grading.push(CornerGrading {
                position: corner.position,
                mu: m,
                radius: 0.5 * domain.clearance(corner.index),
            });
        } else if m != 1.0 {
            return Err(Error::InvalidGrading {
                corner: corner.index,
                x,
                y,
                mu: m,
                admissible: "exactly 1 at convex corners".into(),
            });
        }
    }
    let mut mesh = triangulate_uniform(domain, level)?;
    for p in mesh.points.iter_mut() {
        for g in &grading {
            let d = sub(*p, g.position);
            let r = d[0].hypot(d[1]);
            if r > 0.0 && r < g.radius {
                let scale = g.radius * (r / g.radius).powf(1.0 / g.mu) / r;
                *p = [g.position[0] + scale * d[0], g.position[1] + scale * d[1]];
            }
        }
    }
    // remapping moves points but keeps connectivity; rebuild geometric data
    let nominal_h = mesh.nominal_h;
    let mut graded = Triangulation::build(mesh.points, mesh.triangles, mesh.domain)?;
    graded.level = level;
    graded.nominal_h = nominal_h;
    graded.grading = grading;
    Ok(graded)
}

/// Default grading: `mu` at reentrant corners, 1 elsewhere.
pub fn default_grading(domain: &PolygonalDomain, mu: f64) -> Vec<f64> {
    domain
        .corners()
        .iter()
        .map(|c| if c.reentrant { mu } else { 1.0 })
        .collect()
}

/// Boundary edges split by the sign of `zeta . n` at the edge midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPartition {
    pub inflow: Vec<usize>,
    pub outflow: Vec<usize>,
    is_inflow: Vec<bool>,
}

impl BoundaryPartition {
    /// Whether edge `e` (any edge index) belongs to the inflow boundary.
    pub fn is_inflow(&self, e: usize) -> bool {
        self.is_inflow[e]
    }
}

pub fn classify_boundary_edges(mesh: &Triangulation, zeta: &dyn Fn(Point) -> Point) -> BoundaryPartition {
    let mut is_inflow = vec![false; mesh.edges().len()];
    let mut inflow = Vec::new();
    let mut outflow = Vec::new();
    for (i, e) in mesh.edges().iter().enumerate() {
        if !e.is_boundary() {
            continue;
        }
        let z = zeta(mesh.edge_point(i, 0.5));
        if dot(z, e.normal) < 0.0 {
            is_inflow[i] = true;
            inflow.push(i);
        } else {
            outflow.push(i);
        }
    }
    BoundaryPartition {
        inflow,
        outflow,
        is_inflow,
    }
}

/// All triangles sharing at least one vertex with `t` (including `t`), sorted.
pub fn star(mesh: &Triangulation, t: usize) -> Result<Vec<usize>> {
    if t >= mesh.num_elements() {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: mesh.num_elements(),
        });
    }
    let mut s: Vec<usize> = mesh.triangles()[t]
        .iter()
        .flat_map(|&v| mesh.vertex_elements(v).iter().copied())
        .collect();
    s.sort_unstable();
    s.dedup();
    Ok(s)
}

/// Bucket grid for locating points in a triangulation.
#[derive(Debug, Clone)]
pub struct PointLocator {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Triangulation) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.points() {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let n = mesh.num_elements() as f64;
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let cell = extent / n.sqrt().max(1.0);
        let nx = ((hi[0] - lo[0]) / cell).ceil() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for t in 0..mesh.num_elements() {
            let v = mesh.vertices_of(t);
            let bx = |x: f64| ((x - lo[0]) / cell).floor().max(0.0) as usize;
            let by = |y: f64| ((y - lo[1]) / cell).floor().max(0.0) as usize;
            let (x0, x1) = (
                v.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
                v.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max),
            );
            let (y0, y1) = (
                v.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
                v.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max),
            );
            for j in by(y0)..=by(y1).min(ny - 1) {
                for i in bx(x0)..=bx(x1).min(nx - 1) {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    /// Element containing `p` and its barycentric coordinates. Barycentric
    /// coordinates down to `-1e-12` count as inside; points just outside
    /// every element by rounding fall back to the best candidate within 1e-9.
    pub fn locate(&self, mesh: &Triangulation, p: Point) -> Option<(usize, [f64; 3])> {
        let i = ((p[0] - self.origin[0]) / self.cell).floor();
        let j = ((p[1] - self.origin[1]) / self.cell).floor();
        if i < -1.0 || j < -1.0 || i > self.nx as f64 || j > self.ny as f64 {
            return None;
        }
        let clamp = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
        let (i, j) = (clamp(i, self.nx), clamp(j, self.ny));
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.nx + i] {
            let b = mesh.barycentric(t, p);
            let m = b[0].min(b[1]).min(b[2]);
            if m >= -1e-12 {
                return Some((t, b));
            }
            if best.as_ref().is_none_or(|x| m > x.2) {
                best = Some((t, b, m));
            }
        }
        match best {
            Some((t, b, m)) if m >= -1e-9 => Some((t, b)),
            _ => None,
        }
    }
}
