//! Bogner–Fox–Schmit bicubic Hermite elements on rectangle meshes.
//!
//! Every vertex carries four nodal values `(u, ∂₁u, ∂₂u, ∂₁₂u)` with
//! derivatives in global (unscaled) form. Boundary and hanging-vertex
//! constraints are eliminated: each raw nodal dof is expanded into a linear
//! combination of free dofs.

use std::sync::Arc;

use crate::coefficients::{CoefficientField, Formulation, SymMatrix2};
use crate::error::{FemError, Result};
use crate::mesh_quad::{QuadCell, QuadMesh};
use crate::quadrature::{gauss_rectangle, QuadratureRule, QuadratureSettings};
use crate::sparse::{solve_direct_split, DoubleDouble, SparseMatrix, SplitMatrix, TripletList};
use crate::{Jet, Point};

/// Local dofs per cell.
pub const LOCAL_DOFS: usize = 16;

/// Kinds of nodal values at a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodalKind {
    Value = 0,
    Dx = 1,
    Dy = 2,
    Dxy = 3,
}

#[inline]
pub fn raw_dof(vertex: usize, kind: NodalKind) -> usize {
    4 * vertex + kind as usize
}

/// Cubic Hermite shape functions on `[x0, x0+h]`: returns `(φ, φ', φ'')` for
/// the left value, left slope, right value and right slope.
fn hermite_1d(s: f64, h: f64) -> [[f64; 3]; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    // value functions share their derivatives up to sign, keeping the
    // partition of unity exact in the derivatives
    let v = 3.0 * s2 - 2.0 * s3;
    let dv = (6.0 * s - 6.0 * s2) / h;
    let ddv = (6.0 - 12.0 * s) / (h * h);
    [
        [1.0 - v, -dv, -ddv],
        [h * (s - 2.0 * s2 + s3), 1.0 - 4.0 * s + 3.0 * s2, (-4.0 + 6.0 * s) / h],
        [v, dv, ddv],
        [h * (-s2 + s3), -2.0 * s + 3.0 * s2, (-2.0 + 6.0 * s) / h],
    ]
}

/// Corner positions `(ix, iy)` in local corner order.
const CORNER_POS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Shape function data at `p` for the 16 local dofs of the rectangle
/// `[min, max]`, local dof `4·corner + kind`.
///
/// Each entry is `[φ, ∂₁φ, ∂₂φ, ∂₁₁φ, ∂₁₂φ, ∂₂₂φ]`.
pub fn local_basis(min: Point, max: Point, p: Point) -> [[f64; 6]; LOCAL_DOFS] {
    let hx = max[0] - min[0];
    let hy = max[1] - min[1];
    let bx = hermite_1d((p[0] - min[0]) / hx, hx);
    let by = hermite_1d((p[1] - min[1]) / hy, hy);
    let mut out = [[0.0; 6]; LOCAL_DOFS];
    for (c, &(ix, iy)) in CORNER_POS.iter().enumerate() {
        for kind in 0..4 {
            let dx = kind & 1;
            let dy = kind >> 1;
            let fx = bx[2 * ix + dx];
            let fy = by[2 * iy + dy];
            out[4 * c + kind] = [
                fx[0] * fy[0],
                fx[1] * fy[0],
                fx[0] * fy[1],
                fx[2] * fy[0],
                fx[1] * fy[1],
                fx[0] * fy[2],
            ];
        }
    }
    out
}

/// Expansion of one raw dof into free dofs.
pub type Expansion = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct BfsSpace {
    mesh: QuadMesh,
    expansions: Vec<Expansion>,
    ndof: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pending,
    Active,
    Done,
}

impl BfsSpace {
    pub fn mesh(&self) -> &QuadMesh {
        &self.mesh
    }

    /// Number of free dofs.
    pub fn ndof(&self) -> usize {
        self.ndof
    }

    /// Expansion of raw dof `4·vertex + kind` into free dofs.
    pub fn expansion(&self, raw: usize) -> &[(usize, f64)] {
        &self.expansions[raw]
    }

    /// Global raw dofs of a cell in local order.
    pub fn cell_raw_dofs(&self, cell: &QuadCell) -> [usize; LOCAL_DOFS] {
        let mut out = [0; LOCAL_DOFS];
        for (c, &v) in cell.vertices.iter().enumerate() {
            for k in 0..4 {
                out[4 * c + k] = 4 * v + k;
            }
        }
        out
    }

    /// Nodal values of all raw dofs for a free coefficient vector.
    pub fn expand(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        if coefficients.len() != self.ndof {
            return Err(FemError::Dimension {
                expected: self.ndof,
                found: coefficients.len(),
            });
        }
        Ok(self
            .expansions
            .iter()
            .map(|e| e.iter().map(|&(j, a)| a * coefficients[j]).sum())
            .collect())
    }
}

pub fn build_bfs_space(mesh: &QuadMesh) -> BfsSpace {
    let nv = mesh.vertices().len();
    let mut hanging_of = vec![None; nv];
    for h in mesh.hanging() {
        hanging_of[h.vertex] = Some(*h);
    }
    let mut expansions: Vec<Expansion> = vec![Vec::new(); 4 * nv];
    let mut status = vec![Status::Pending; 4 * nv];
    let mut ndof = 0;
    for v in 0..nv {
        if hanging_of[v].is_some() {
            continue;
        }
        let p = mesh.vertices()[v];
        let on_horizontal = p[1].abs() == 1.0;
        let on_vertical = p[0].abs() == 1.0;
        for k in 0..4 {
            let constrained = match k {
                0 => on_horizontal || on_vertical,
                1 => on_horizontal,
                2 => on_vertical,
                _ => false,
            };
            if !constrained {
                expansions[4 * v + k] = vec![(ndof, 1.0)];
                ndof += 1;
            }
            status[4 * v + k] = Status::Done;
        }
    }

    fn resolve(
        raw: usize,
        mesh: &QuadMesh,
        hanging_of: &[Option<crate::mesh_quad::HangingVertex>],
        expansions: &mut Vec<Expansion>,
        status: &mut Vec<Status>,
    ) {
        match status[raw] {
            Status::Done => return,
            Status::Active => panic!("cyclic hanging-vertex dependency at raw dof {raw}"),
            Status::Pending => {}
        }
        status[raw] = Status::Active;
        let h = hanging_of[raw / 4].expect("pending dof belongs to a hanging vertex");
        let [pv, qv] = h.edge;
        let (pp, qp) = (mesh.vertices()[pv], mesh.vertices()[qv]);
        let horizontal = pp[1] == qp[1];
        let len = if horizontal { qp[0] - pp[0] } else { qp[1] - pp[1] };
        // tangential (t) and normal (n) derivative kinds for this edge
        let (t, n, tn) = if horizontal { (1, 2, 3) } else { (2, 1, 3) };
        let kind = raw % 4;
        // (value-like kind, slope-like kind) pair traced along the edge
        let (base, slope, is_slope) = match kind {
            0 => (0, t, false),
            k if k == t => (0, t, true),
            k if k == n => (n, tn, false),
            _ => (n, tn, true),
        };
        let combo: [(usize, f64); 4] = if is_slope {
            [
                (4 * pv + base, -1.5 / len),
                (4 * qv + base, 1.5 / len),
                (4 * pv + slope, -0.25),
                (4 * qv + slope, -0.25),
            ]
        } else {
            [
                (4 * pv + base, 0.5),
                (4 * qv + base, 0.5),
                (4 * pv + slope, len / 8.0),
                (4 * qv + slope, -len / 8.0),
            ]
        };
        let mut acc: Expansion = Vec::new();
        for (r, a) in combo {
            resolve(r, mesh, hanging_of, expansions, status);
            for &(j, b) in &expansions[r] {
                acc.push((j, a * b));
            }
        }
        acc.sort_by_key(|e| e.0);
        let mut merged: Expansion = Vec::with_capacity(acc.len());
        for (j, a) in acc {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        expansions[raw] = merged;
        status[raw] = Status::Done;
    }

    for raw in 0..4 * nv {
        resolve(raw, mesh, &hanging_of, &mut expansions, &mut status);
    }
    BfsSpace {
        mesh: mesh.clone(),
        expansions,
        ndof,
    }
}

fn rect_rule(quad: &QuadratureSettings) -> Result<QuadratureRule> {
    gauss_rectangle(quad.rect_points)
}

/// Scatters a local matrix/vector through the constraint expansions.
fn scatter(
    space: &BfsSpace,
    raw: &[usize; LOCAL_DOFS],
    local_k: &[[DoubleDouble; LOCAL_DOFS]; LOCAL_DOFS],
    local_f: &[DoubleDouble; LOCAL_DOFS],
    triplets: &mut TripletList,
    rhs: &mut [DoubleDouble],
) {
    for i in 0..LOCAL_DOFS {
        let ei = &space.expansions[raw[i]];
        if ei.is_empty() {
            continue;
        }
        for &(gi, a) in ei {
            rhs[gi] += local_f[i].mul_f64(a);
        }
        for j in 0..LOCAL_DOFS {
            let kij = local_k[i][j];
            if kij.hi == 0.0 {
                continue;
            }
            for &(gj, b) in &space.expansions[raw[j]] {
                let kb = kij.mul_f64(b);
                for &(gi, a) in ei {
                    triplets.push_dd(gi, gj, kb.mul_f64(a));
                }
            }
        }
    }
}

/// Assembles `K_ij = (A:D²φ_j, τ(∇φ_i))` and `F_i = (f, τ(∇φ_i))` over the free dofs.
pub fn assemble_conforming<F: Fn(Point) -> f64>(
    space: &BfsSpace,
    coeff: &CoefficientField,
    formulation: Formulation,
    f: F,
    quad: &QuadratureSettings,
) -> Result<(SparseMatrix, Vec<f64>)> {
    let (k, rhs) = assemble_conforming_split(space, coeff, formulation, f, quad)?;
    Ok((k.rounded(), rhs.iter().map(|v| v.to_f64()).collect()))
}

/// [`assemble_conforming`] with every sum after the pointwise basis evaluation
/// carried in double-double, so the system is exact for the evaluated basis.
pub fn assemble_conforming_split<F: Fn(Point) -> f64>(
    space: &BfsSpace,
    coeff: &CoefficientField,
    formulation: Formulation,
    f: F,
    quad: &QuadratureSettings,
) -> Result<(SplitMatrix, Vec<DoubleDouble>)> {
    let rule = rect_rule(quad)?;
    let n = space.ndof;
    let mut triplets = TripletList::with_capacity(n, n, space.mesh.cells().len() * 600);
    let mut rhs = vec![DoubleDouble::ZERO; n];
    for cell in space.mesh.cells() {
        let mut local_k = [[DoubleDouble::ZERO; LOCAL_DOFS]; LOCAL_DOFS];
        let mut local_f = [DoubleDouble::ZERO; LOCAL_DOFS];
        for (p, w) in cell.geometry().quadrature_points(&rule, quad.subdivision)? {
            let a = coeff.eval(p);
            let basis = local_basis(cell.min, cell.max, p);
            let gamma = a.trace() / a.frobenius_sq();
            let mut trial = [DoubleDouble::ZERO; LOCAL_DOFS];
            let mut test = [DoubleDouble::ZERO; LOCAL_DOFS];
            for (k, b) in basis.iter().enumerate() {
                trial[k] = DoubleDouble::product(a.a11, b[3])
                    + DoubleDouble::product(2.0 * a.a12, b[4])
                    + DoubleDouble::product(a.a22, b[5]);
                test[k] = match formulation {
                    Formulation::LeastSquares => trial[k],
                    Formulation::NonSymmetric => DoubleDouble::product(gamma, b[3]) + DoubleDouble::product(gamma, b[5]),
                };
            }
            let fp = f(p);
            for i in 0..LOCAL_DOFS {
                let wt = test[i].mul_f64(w);
                local_f[i] += wt.mul_f64(fp);
                for j in 0..LOCAL_DOFS {
                    local_k[i][j] += wt * trial[j];
                }
            }
        }
        scatter(space, &space.cell_raw_dofs(cell), &local_k, &local_f, &mut triplets, &mut rhs);
    }
    Ok((triplets.compress_split()?, rhs))
}

/// A function in the BFS space.
#[derive(Debug, Clone)]
pub struct DiscreteFunctionH2 {
    space: Arc<BfsSpace>,
    coefficients: Vec<f64>,
    nodal: Vec<f64>,
}

impl DiscreteFunctionH2 {
    pub fn new(space: Arc<BfsSpace>, coefficients: Vec<f64>) -> Result<Self> {
        let nodal = space.expand(&coefficients)?;
        Ok(Self {
            space,
            coefficients,
            nodal,
        })
    }

    pub fn zero(space: Arc<BfsSpace>) -> Self {
        let n = space.ndof();
        Self::new(space, vec![0.0; n]).expect("dimension matches")
    }

    pub fn space(&self) -> &Arc<BfsSpace> {
        &self.space
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Evaluation restricted to cell `c`; `p` may lie anywhere in its closure.
    pub fn eval_on_cell(&self, c: usize, p: Point) -> Jet {
        let cell = &self.space.mesh.cells()[c];
        let basis = local_basis(cell.min, cell.max, p);
        let raw = self.space.cell_raw_dofs(cell);
        let mut acc = [DoubleDouble::ZERO; 6];
        for (b, &r) in basis.iter().zip(raw.iter()) {
            let u = self.nodal[r];
            for (a, &bk) in acc.iter_mut().zip(b) {
                *a += DoubleDouble::product(u, bk);
            }
        }
        let d = acc.map(DoubleDouble::to_f64);
        Jet {
            value: d[0],
            gradient: [d[1], d[2]],
            hessian: SymMatrix2::new(d[3], d[4], d[5]),
        }
    }
}

/// Evaluates `u_h` with its gradient and Hessian at `p`.
pub fn eval_h2(u: &DiscreteFunctionH2, p: Point) -> Result<Jet> {
    let c = u.space.mesh.locate(p).ok_or(FemError::OutsideDomain(p[0], p[1]))?;
    Ok(u.eval_on_cell(c, p))
}

/// Solution of the conforming discrete problem together with its algebraic residual.
#[derive(Debug, Clone)]
pub struct ConformingSolve {
    pub solution: DiscreteFunctionH2,
    /// `max_j |(K u − F)_j| / √K_jj`; for least squares this pairs the
    /// residual `A:D²u_h − f` with the L²-normalized test functions.
    pub galerkin_residual: f64,
}

pub fn solve_conforming_detailed<F: Fn(Point) -> f64>(
    space: Arc<BfsSpace>,
    coeff: &CoefficientField,
    formulation: Formulation,
    f: F,
    quad: &QuadratureSettings,
) -> Result<ConformingSolve> {
    let (k, rhs) = assemble_conforming_split(&space, coeff, formulation, f, quad)?;
    let x = if rhs.iter().all(|v| v.hi == 0.0) {
        vec![0.0; rhs.len()]
    } else {
        solve_direct_split(&k, &rhs)?
    };
    let galerkin_residual = k
        .residual(&x, &rhs)
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let d = k.hi.get(j, j).abs().sqrt();
            if d > 0.0 {
                r.abs() / d
            } else {
                r.abs()
            }
        })
        .fold(0.0, f64::max);
    Ok(ConformingSolve {
        solution: DiscreteFunctionH2::new(space, x)?,
        galerkin_residual,
    })
}

pub fn solve_conforming<F: Fn(Point) -> f64>(
    space: Arc<BfsSpace>,
    coeff: &CoefficientField,
    formulation: Formulation,
    f: F,
    quad: &QuadratureSettings,
) -> Result<DiscreteFunctionH2> {
    Ok(solve_conforming_detailed(space, coeff, formulation, f, quad)?.solution)
}

/// Hermite interpolant from nodal data `[u, ∂₁u, ∂₂u, ∂₁₂u]` at the free
/// vertices; hanging and boundary values follow from the constraints.
pub fn interpolate<G: Fn(Point) -> [f64; 4]>(space: Arc<BfsSpace>, g: G) -> Result<DiscreteFunctionH2> {
    let mut coeffs = vec![0.0; space.ndof()];
    let hanging: std::collections::HashSet<usize> = space.mesh.hanging().iter().map(|h| h.vertex).collect();
    for (v, &p) in space.mesh.vertices().iter().enumerate() {
        if hanging.contains(&v) {
            continue;
        }
        let data = g(p);
        for (k, &val) in data.iter().enumerate() {
            if let [(j, a)] = space.expansions[4 * v + k].as_slice() {
                coeffs[*j] = val / a;
            }
        }
    }
    DiscreteFunctionH2::new(space, coeffs)
}
