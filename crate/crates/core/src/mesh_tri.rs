//! Conforming triangulations of (−1,1)² refined by newest-vertex bisection.
//!
//! Each triangle stores its vertices counterclockwise with the newest vertex
//! first, so the refinement edge is always the edge `(v1, v2)` opposite
//! `v0`. Bisection creates the children `(m, v0, v1)` and `(m, v2, v0)`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{FemError, Result};
use crate::quadrature::ElementGeometry;
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TriMeshSpec {
    /// `n × n` squares, each cut by the diagonal from its lower-left corner.
    Criss(usize),
    /// Four rectangles meeting at an interior point, each cut by one diagonal.
    CrissCross(Point),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    /// Counterclockwise; the refinement edge is `(vertices[1], vertices[2])`.
    pub vertices: [usize; 3],
    pub generation: u32,
}

impl Triangle {
    /// Local index of the vertex opposite the refinement edge.
    pub const REFINEMENT_EDGE: usize = 0;

    pub fn refinement_edge(&self) -> (usize, usize) {
        edge_key(self.vertices[1], self.vertices[2])
    }

    /// Edges as sorted vertex pairs, edge `i` opposite local vertex `i`.
    pub fn edges(&self) -> [(usize, usize); 3] {
        let v = self.vertices;
        [edge_key(v[1], v[2]), edge_key(v[2], v[0]), edge_key(v[0], v[1])]
    }
}

#[inline]
pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<Triangle>,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl TriMesh {
    /// Builds a mesh from raw data without any validity checks.
    pub fn from_raw(vertices: Vec<Point>, triangles: Vec<Triangle>) -> Self {
        Self { vertices, triangles }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let v = self.triangles[t].vertices;
        [self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]]]
    }

    pub fn geometry(&self, t: usize) -> ElementGeometry {
        ElementGeometry::Triangle(self.corners(t))
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        let d = |p: Point, q: Point| (p[0] - q[0]).hypot(p[1] - q[1]);
        d(a, b).max(d(b, c)).max(d(c, a))
    }

    pub fn h_max(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    /// Smallest interior angle (radians) over all triangles.
    pub fn min_angle(&self) -> f64 {
        let mut m = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let p = self.corners(t);
            for i in 0..3 {
                let a = p[i];
                let b = p[(i + 1) % 3];
                let c = p[(i + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                m = m.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        m
    }

    /// Sorted list of all edges.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set: Vec<(usize, usize)> = self.triangles.iter().flat_map(|t| t.edges()).collect();
        set.sort_unstable();
        set.dedup();
        set
    }

    /// Point location by linear scan.
    pub fn locate(&self, p: Point) -> Option<usize> {
        (0..self.triangles.len()).find(|&t| {
            let [a, b, c] = self.corners(t);
            let tol = -1e-14 * self.area(t).abs().max(1e-300);
            signed_area(a, b, p) >= tol && signed_area(b, c, p) >= tol && signed_area(c, a, p) >= tol
        })
    }

    /// Text dump: sections VERTICES and TRIANGLES with 0-based indices.
    ///
    /// ```text
    /// VERTICES <n>
    /// <id> <x> <y>
    /// TRIANGLES <n>
    /// <id> <v0> <v1> <v2> <generation>
    /// ```
    /// `v0` is the newest vertex; `(v1, v2)` is the refinement edge.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "VERTICES {}", self.vertices.len());
        for (i, p) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "{i} {:.17e} {:.17e}", p[0], p[1]);
        }
        let _ = writeln!(s, "TRIANGLES {}", self.triangles.len());
        for (i, t) in self.triangles.iter().enumerate() {
            let v = t.vertices;
            let _ = writeln!(s, "{i} {} {} {} {}", v[0], v[1], v[2], t.generation);
        }
        s
    }
}

fn on_boundary(p: Point) -> bool {
    p[0].abs() == 1.0 || p[1].abs() == 1.0
}

/// True iff the mesh is a conforming triangulation of the square: every
/// edge is shared by at most two triangles and every edge with a single
/// triangle lies on ∂Ω.
pub fn check_conforming(mesh: &TriMesh) -> bool {
    let mut count: HashMap<(usize, usize), u32> = HashMap::new();
    for t in &mesh.triangles {
        for e in t.edges() {
            *count.entry(e).or_insert(0) += 1;
        }
    }
    count.iter().all(|(&(a, b), &n)| match n {
        2 => true,
        1 => {
            let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
            (p[0] == q[0] && p[0].abs() == 1.0) || (p[1] == q[1] && p[1].abs() == 1.0)
        }
        _ => false,
    })
}

/// Conformity, orientation and area checks.
pub fn check_mesh(mesh: &TriMesh) -> Result<()> {
    if !check_conforming(mesh) {
        return Err(FemError::MeshInvariant("triangulation is not conforming".into()));
    }
    for t in 0..mesh.triangles.len() {
        if !(mesh.area(t) > 0.0) {
            return Err(FemError::MeshInvariant(format!("triangle {t} is not positively oriented")));
        }
    }
    let area = mesh.total_area();
    if (area - 4.0).abs() > 1e-10 {
        return Err(FemError::MeshInvariant(format!("triangles cover area {area}, expected 4")));
    }
    Ok(())
}

/// Orders a counterclockwise triangle so that its longest edge (ties by the
/// smallest sorted vertex pair) becomes the refinement edge.
fn with_longest_edge(verts: &[Point], tri: [usize; 3]) -> Triangle {
    let len2 = |a: usize, b: usize| {
        let (p, q) = (verts[a], verts[b]);
        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
    };
    let mut best = 0;
    for i in 1..3 {
        let (bi, bj) = (tri[(best + 1) % 3], tri[(best + 2) % 3]);
        let (ci, cj) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
        let (lb, lc) = (len2(bi, bj), len2(ci, cj));
        if lc > lb || (lc == lb && edge_key(ci, cj) < edge_key(bi, bj)) {
            best = i;
        }
    }
    Triangle {
        vertices: [tri[best], tri[(best + 1) % 3], tri[(best + 2) % 3]],
        generation: 0,
    }
}

pub fn initial_tri_mesh(spec: TriMeshSpec) -> Result<TriMesh> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = match spec {
        TriMeshSpec::Criss(n) => {
            if n == 0 {
                return Err(FemError::Parameter("criss mesh needs n >= 1".into()));
            }
            let c: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
            (c.clone(), c)
        }
        TriMeshSpec::CrissCross(p) => {
            if !(p[0] > -1.0 && p[0] < 1.0 && p[1] > -1.0 && p[1] < 1.0) {
                return Err(FemError::Parameter(format!(
                    "criss-cross point ({}, {}) must lie strictly inside the domain",
                    p[0], p[1]
                )));
            }
            (vec![-1.0, p[0], 1.0], vec![-1.0, p[1], 1.0])
        }
    };
    let nx = xs.len();
    let mut vertices = Vec::with_capacity(nx * ys.len());
    for &y in &ys {
        for &x in &xs {
            vertices.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut triangles = Vec::new();
    for j in 0..ys.len() - 1 {
        for i in 0..nx - 1 {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push(with_longest_edge(&vertices, [a, b, c]));
            triangles.push(with_longest_edge(&vertices, [a, c, d]));
        }
    }
    Ok(TriMesh { vertices, triangles })
}

/// Newest-vertex bisection of all marked triangles plus the closure needed
/// for conformity.
///
/// The refinement edges of marked triangles are marked; any triangle with a
/// marked edge gets its refinement edge marked, up to a fixed point. Each
/// triangle is then bisected recursively while its refinement edge is marked.
pub fn nvb_refine(mesh: &TriMesh, marked: &[usize]) -> Result<TriMesh> {
    let n = mesh.triangles.len();
    let mut edge_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(3 * n / 2 + 4);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for e in tri.edges() {
            edge_tris.entry(e).or_default().push(t);
        }
    }
    let mut marked_edges: HashSet<(usize, usize)> = HashSet::new();
    let mut work = Vec::new();
    for &t in marked {
        if t >= n {
            return Err(FemError::Parameter(format!("marked triangle {t} does not exist ({n} triangles)")));
        }
        let e = mesh.triangles[t].refinement_edge();
        if marked_edges.insert(e) {
            work.push(e);
        }
    }
    while let Some(e) = work.pop() {
        for &t in &edge_tris[&e] {
            let r = mesh.triangles[t].refinement_edge();
            if marked_edges.insert(r) {
                work.push(r);
            }
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(marked_edges.len());
    let mut triangles = Vec::with_capacity(n + 2 * marked_edges.len());
    // midpoints are created in edge-sorted order so vertex numbering is deterministic
    let mut sorted: Vec<(usize, usize)> = marked_edges.iter().copied().collect();
    sorted.sort_unstable();
    for e in sorted {
        let (p, q) = (vertices[e.0], vertices[e.1]);
        midpoints.insert(e, vertices.len());
        vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
    }
    fn bisect(
        t: Triangle,
        marked: &HashSet<(usize, usize)>,
        mid: &HashMap<(usize, usize), usize>,
        out: &mut Vec<Triangle>,
    ) {
        let e = t.refinement_edge();
        if !marked.contains(&e) {
            out.push(t);
            return;
        }
        let m = mid[&e];
        let [v0, v1, v2] = t.vertices;
        let g = t.generation + 1;
        bisect(Triangle { vertices: [m, v0, v1], generation: g }, marked, mid, out);
        bisect(Triangle { vertices: [m, v2, v0], generation: g }, marked, mid, out);
    }
    for &t in &mesh.triangles {
        bisect(t, &marked_edges, &midpoints, &mut triangles);
    }
    Ok(TriMesh { vertices, triangles })
}

/// Uniform refinement: every triangle bisected twice (four children).
pub fn refine_uniform(mesh: &TriMesh) -> Result<TriMesh> {
    let all: Vec<usize> = (0..mesh.triangles.len()).collect();
    let once = nvb_refine(mesh, &all)?;
    let all: Vec<usize> = (0..once.triangles.len()).collect();
    nvb_refine(&once, &all)
}

pub fn is_boundary_point(p: Point) -> bool {
    on_boundary(p)
}
