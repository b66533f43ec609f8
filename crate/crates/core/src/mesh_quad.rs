//! Axis-aligned rectangular meshes of (−1,1)² with four-split refinement.
//!
//! Cells are leaves of a quadtree over the initial partition. Vertices are
//! identified by their exact coordinates: all coordinates on a mesh line come
//! from repeated midpoint bisection of the same initial coordinates, so equal
//! geometric points are bitwise equal. A vertex that is the midpoint of a
//! side of some cell is hanging on that side; at most one hanging vertex per
//! side is allowed.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{FemError, Result};
use crate::quadrature::ElementGeometry;
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadMeshSpec {
    /// `n × n` congruent squares.
    Uniform(usize),
    /// Four rectangles meeting at an interior point.
    Cross(Point),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadCell {
    pub min: Point,
    pub max: Point,
    /// Corner vertex ids, counterclockwise from `min`.
    pub vertices: [usize; 4],
    pub level: u32,
    /// Index of the initial cell this cell descends from.
    pub root: usize,
}

impl QuadCell {
    pub fn geometry(&self) -> ElementGeometry {
        ElementGeometry::Rectangle {
            min: self.min,
            max: self.max,
        }
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    pub fn diameter(&self) -> f64 {
        (self.max[0] - self.min[0]).hypot(self.max[1] - self.min[1])
    }

    pub fn centroid(&self) -> Point {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1])]
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    /// Corner coordinates in vertex order.
    pub fn corners(&self) -> [Point; 4] {
        [
            self.min,
            [self.max[0], self.min[1]],
            self.max,
            [self.min[0], self.max[1]],
        ]
    }

    /// Sides as pairs of local corner indices; the first endpoint has the
    /// smaller coordinate along the side.
    pub const SIDES: [(usize, usize); 4] = [(0, 1), (1, 2), (3, 2), (0, 3)];
}

/// A vertex in the interior of a coarse cell side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HangingVertex {
    pub vertex: usize,
    /// Endpoints of the coarse side, ordered by increasing coordinate.
    pub edge: [usize; 2],
    /// Position along the side (always 1/2 for four-splits).
    pub parameter: f64,
    /// Cell owning the coarse side.
    pub coarse_cell: usize,
}

type Key = (u64, u64);

fn key(p: Point) -> Key {
    // +0.0 and −0.0 must coincide
    ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits())
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

#[derive(Debug, Clone)]
pub struct QuadMesh {
    vertices: Vec<Point>,
    cells: Vec<QuadCell>,
    hanging: Vec<HangingVertex>,
    lookup: HashMap<Key, usize>,
}

impl QuadMesh {
    fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            cells: Vec::new(),
            hanging: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    fn vertex(&mut self, p: Point) -> usize {
        let k = key(p);
        if let Some(&id) = self.lookup.get(&k) {
            return id;
        }
        let id = self.vertices.len();
        self.vertices.push(p);
        self.lookup.insert(k, id);
        id
    }

    fn make_cell(&mut self, min: Point, max: Point, level: u32, root: usize) -> QuadCell {
        let v = [
            self.vertex(min),
            self.vertex([max[0], min[1]]),
            self.vertex(max),
            self.vertex([min[0], max[1]]),
        ];
        QuadCell {
            min,
            max,
            vertices: v,
            level,
            root,
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[QuadCell] {
        &self.cells
    }

    pub fn hanging(&self) -> &[HangingVertex] {
        &self.hanging
    }

    pub fn vertex_id(&self, p: Point) -> Option<usize> {
        self.lookup.get(&key(p)).copied()
    }

    pub fn h_max(&self) -> f64 {
        self.cells.iter().map(QuadCell::diameter).fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(QuadCell::area).sum()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let p = self.vertices[v];
        p[0].abs() == 1.0 || p[1].abs() == 1.0
    }

    /// Locates a cell containing `p` (closed cells; first match).
    pub fn locate(&self, p: Point) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(p))
    }

    fn find_hanging(&self) -> Vec<HangingVertex> {
        let mut out = Vec::new();
        for (ci, cell) in self.cells.iter().enumerate() {
            let corners = cell.corners();
            for &(a, b) in &QuadCell::SIDES {
                if let Some(m) = self.vertex_id(midpoint(corners[a], corners[b])) {
                    out.push(HangingVertex {
                        vertex: m,
                        edge: [cell.vertices[a], cell.vertices[b]],
                        parameter: 0.5,
                        coarse_cell: ci,
                    });
                }
            }
        }
        out.sort_by_key(|h| h.vertex);
        out
    }

    /// Whether a side of `cell` carries more than one hanging vertex.
    fn side_overloaded(&self, cell: &QuadCell) -> bool {
        let corners = cell.corners();
        QuadCell::SIDES.iter().any(|&(a, b)| {
            let m = midpoint(corners[a], corners[b]);
            self.vertex_id(m).is_some()
                && (self.vertex_id(midpoint(corners[a], m)).is_some()
                    || self.vertex_id(midpoint(m, corners[b])).is_some())
        })
    }

    /// Checks the one-hanging-vertex-per-side rule and the tiling of Ω.
    pub fn check_admissible(&self) -> Result<()> {
        for (i, c) in self.cells.iter().enumerate() {
            if self.side_overloaded(c) {
                return Err(FemError::MeshInvariant(format!(
                    "cell {i} has a side with more than one hanging vertex"
                )));
            }
            if !(c.area() > 0.0) {
                return Err(FemError::MeshInvariant(format!("cell {i} is degenerate")));
            }
        }
        let area = self.total_area();
        if (area - 4.0).abs() > 1e-10 {
            return Err(FemError::MeshInvariant(format!("cells cover area {area}, expected 4")));
        }
        Ok(())
    }

    /// Text dump: sections VERTICES, CELLS and HANGING with 0-based indices.
    ///
    /// ```text
    /// VERTICES <n>
    /// <id> <x> <y>
    /// CELLS <n>
    /// <id> <v0> <v1> <v2> <v3> <level>
    /// HANGING <n>
    /// <vertex> <edge_v0> <edge_v1> <parameter>
    /// ```
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "VERTICES {}", self.vertices.len());
        for (i, p) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "{i} {:.17e} {:.17e}", p[0], p[1]);
        }
        let _ = writeln!(s, "CELLS {}", self.cells.len());
        for (i, c) in self.cells.iter().enumerate() {
            let v = c.vertices;
            let _ = writeln!(s, "{i} {} {} {} {} {}", v[0], v[1], v[2], v[3], c.level);
        }
        let _ = writeln!(s, "HANGING {}", self.hanging.len());
        for h in &self.hanging {
            let _ = writeln!(s, "{} {} {} {}", h.vertex, h.edge[0], h.edge[1], h.parameter);
        }
        s
    }
}

pub fn initial_quad_mesh(spec: QuadMeshSpec) -> Result<QuadMesh> {
    let mut mesh = QuadMesh::empty();
    match spec {
        QuadMeshSpec::Uniform(n) => {
            if n == 0 {
                return Err(FemError::Parameter("uniform mesh needs n >= 1".into()));
            }
            let coord = |i: usize| -1.0 + 2.0 * i as f64 / n as f64;
            for j in 0..n {
                for i in 0..n {
                    let root = mesh.cells.len();
                    let c = mesh.make_cell([coord(i), coord(j)], [coord(i + 1), coord(j + 1)], 0, root);
                    mesh.cells.push(c);
                }
            }
        }
        QuadMeshSpec::Cross(p) => {
            if !(p[0] > -1.0 && p[0] < 1.0 && p[1] > -1.0 && p[1] < 1.0) {
                return Err(FemError::Parameter(format!(
                    "cross point ({}, {}) must lie strictly inside the domain",
                    p[0], p[1]
                )));
            }
            let boxes = [
                ([-1.0, -1.0], p),
                ([p[0], -1.0], [1.0, p[1]]),
                (p, [1.0, 1.0]),
                ([-1.0, p[1]], [p[0], 1.0]),
            ];
            for (root, (min, max)) in boxes.into_iter().enumerate() {
                let c = mesh.make_cell(min, max, 0, root);
                mesh.cells.push(c);
            }
        }
    }
    mesh.hanging = mesh.find_hanging();
    Ok(mesh)
}

/// Splits every marked cell into four congruent children and closes the mesh
/// so that every side carries at most one hanging vertex.
///
/// Closure repeatedly refines any cell owning a side with two hanging
/// vertices until a fixed point is reached.
pub fn refine_quads(mesh: &QuadMesh, marked: &[usize]) -> Result<QuadMesh> {
    let mut out = mesh.clone();
    let mut to_refine: HashSet<usize> = HashSet::new();
    for &m in marked {
        if m >= mesh.cells.len() {
            return Err(FemError::Parameter(format!(
                "marked cell {m} does not exist ({} cells)",
                mesh.cells.len()
            )));
        }
        to_refine.insert(m);
    }
    while !to_refine.is_empty() {
        let old = std::mem::take(&mut out.cells);
        let mut cells = Vec::with_capacity(old.len() + 3 * to_refine.len());
        for (i, c) in old.into_iter().enumerate() {
            if to_refine.contains(&i) {
                let geom = c.geometry();
                for child in geom.split4() {
                    if let ElementGeometry::Rectangle { min, max } = child {
                        let cell = out.make_cell(min, max, c.level + 1, c.root);
                        cells.push(cell);
                    }
                }
            } else {
                cells.push(c);
            }
        }
        out.cells = cells;
        to_refine = out
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| out.side_overloaded(c))
            .map(|(i, _)| i)
            .collect();
    }
    out.hanging = out.find_hanging();
    Ok(out)
}

pub fn hanging_constraints(mesh: &QuadMesh) -> &[HangingVertex] {
    mesh.hanging()
}
