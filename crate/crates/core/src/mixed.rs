//! Stabilized Taylor–Hood discretization of the rot-constrained mixed
//! formulation on triangle meshes, plus recovery of the primal variable.
//!
//! Unknowns: a P2 vector field `w_h` whose tangential trace vanishes, a P1
//! multiplier `p_h` with zero mean (enforced by one Lagrange scalar) and,
//! after the saddle-point solve, a P2 scalar `u_h ∈ H¹₀` with
//! `(∇u_h, ∇z) = (w_h, ∇z)` for all `z`.

use std::collections::HashMap;
use std::sync::Arc;

use crate::coefficients::{CoefficientField, Formulation, Mat2, StabilizationParams};
use crate::error::{FemError, Result};
use crate::mesh_tri::{edge_key, TriMesh};
use crate::quadrature::{gauss_triangle, QuadratureRule, QuadratureSettings};
use crate::sparse::{solve_direct, SparseMatrix, TripletList};
use crate::Point;

/// Barycentric coordinates and their constant gradients on one triangle.
#[derive(Debug, Clone, Copy)]
pub struct Barycentric {
    origin: Point,
    grads: [[f64; 2]; 3],
}

impl Barycentric {
    pub fn new(c: [Point; 3]) -> Self {
        let [a, b, d] = c;
        let det = (b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]);
        let g = |p: Point, q: Point| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
        Self {
            origin: a,
            grads: [g(b, d), g(d, a), g(a, b)],
        }
    }

    pub fn gradients(&self) -> &[[f64; 2]; 3] {
        &self.grads
    }

    pub fn at(&self, p: Point) -> [f64; 3] {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1]];
        let g = &self.grads;
        let l1 = g[1][0] * d[0] + g[1][1] * d[1];
        let l2 = g[2][0] * d[0] + g[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }

    /// P2 values and gradients; local order: vertices 0,1,2 then the
    /// midpoints of the edges opposite vertices 0,1,2.
    pub fn p2(&self, p: Point) -> ([f64; 6], [[f64; 2]; 6]) {
        let l = self.at(p);
        let g = &self.grads;
        let mut val = [0.0; 6];
        let mut grad = [[0.0; 2]; 6];
        for i in 0..3 {
            val[i] = l[i] * (2.0 * l[i] - 1.0);
            let s = 4.0 * l[i] - 1.0;
            grad[i] = [s * g[i][0], s * g[i][1]];
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            val[3 + i] = 4.0 * l[j] * l[k];
            grad[3 + i] = [
                4.0 * (l[k] * g[j][0] + l[j] * g[k][0]),
                4.0 * (l[k] * g[j][1] + l[j] * g[k][1]),
            ];
        }
        (val, grad)
    }
}

/// Dof maps for `W_h × Q_h` and `S_h` on one triangulation.
#[derive(Debug, Clone)]
pub struct ThSpaces {
    mesh: TriMesh,
    /// P2 nodes: vertices first, then edge midpoints.
    nodes: Vec<Point>,
    tri_nodes: Vec<[usize; 6]>,
    /// Free index of `(node, component)` at position `2·node + component`.
    w_map: Vec<Option<usize>>,
    n_w: usize,
    s_map: Vec<Option<usize>>,
    n_s: usize,
}

impl ThSpaces {
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn tri_nodes(&self, t: usize) -> [usize; 6] {
        self.tri_nodes[t]
    }

    /// Free dofs of `W_h`.
    pub fn dim_w(&self) -> usize {
        self.n_w
    }

    /// Dimension of the zero-mean P1 space.
    pub fn dim_q(&self) -> usize {
        self.mesh.vertices().len() - 1
    }

    /// Free dofs of `S_h`.
    pub fn dim_s(&self) -> usize {
        self.n_s
    }

    /// Reported problem size `dim W_h + dim Q_h`.
    pub fn ndof(&self) -> usize {
        self.dim_w() + self.dim_q()
    }

    pub fn w_index(&self, node: usize, component: usize) -> Option<usize> {
        self.w_map[2 * node + component]
    }

    pub fn s_index(&self, node: usize) -> Option<usize> {
        self.s_map[node]
    }

    /// Size of the assembled saddle-point system.
    pub fn system_size(&self) -> usize {
        self.n_w + self.mesh.vertices().len() + 1
    }
}

pub fn build_th_spaces(mesh: &TriMesh) -> ThSpaces {
    let nv = mesh.vertices().len();
    let edges = mesh.edges();
    let edge_index: HashMap<(usize, usize), usize> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let mut nodes = mesh.vertices().to_vec();
    nodes.extend(edges.iter().map(|&(a, b)| {
        let (p, q) = (mesh.vertices()[a], mesh.vertices()[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }));
    let tri_nodes = mesh
        .triangles()
        .iter()
        .map(|t| {
            let v = t.vertices;
            [
                v[0],
                v[1],
                v[2],
                nv + edge_index[&edge_key(v[1], v[2])],
                nv + edge_index[&edge_key(v[2], v[0])],
                nv + edge_index[&edge_key(v[0], v[1])],
            ]
        })
        .collect();
    let mut w_map = Vec::with_capacity(2 * nodes.len());
    let mut s_map = Vec::with_capacity(nodes.len());
    let (mut n_w, mut n_s) = (0, 0);
    for p in &nodes {
        let horizontal = p[1].abs() == 1.0;
        let vertical = p[0].abs() == 1.0;
        for constrained in [horizontal, vertical] {
            w_map.push(if constrained {
                None
            } else {
                n_w += 1;
                Some(n_w - 1)
            });
        }
        s_map.push(if horizontal || vertical {
            None
        } else {
            n_s += 1;
            Some(n_s - 1)
        });
    }
    ThSpaces {
        mesh: mesh.clone(),
        nodes,
        tri_nodes,
        w_map,
        n_w,
        s_map,
        n_s,
    }
}

fn tri_rule(quad: &QuadratureSettings) -> Result<QuadratureRule> {
    gauss_triangle(quad.tri_degree)
}

/// A field in `W_h` stored by nodal values (constrained entries are zero).
#[derive(Debug, Clone)]
pub struct ThField {
    spaces: Arc<ThSpaces>,
    free: Vec<f64>,
    nodal: Vec<f64>,
}

impl ThField {
    pub fn new(spaces: Arc<ThSpaces>, free: Vec<f64>) -> Result<Self> {
        if free.len() != spaces.dim_w() {
            return Err(FemError::Dimension {
                expected: spaces.dim_w(),
                found: free.len(),
            });
        }
        let nodal = spaces.w_map.iter().map(|m| m.map_or(0.0, |i| free[i])).collect();
        Ok(Self { spaces, free, nodal })
    }

    pub fn spaces(&self) -> &Arc<ThSpaces> {
        &self.spaces
    }

    pub fn free(&self) -> &[f64] {
        &self.free
    }

    /// Value and Jacobian `D[c][k] = ∂_k w_c` on triangle `t`.
    pub fn eval_on(&self, t: usize, bary: &Barycentric, p: Point) -> ([f64; 2], Mat2) {
        let (val, grad) = bary.p2(p);
        let nodes = self.spaces.tri_nodes[t];
        let mut w = [0.0; 2];
        let mut d = [[0.0; 2]; 2];
        for (a, &n) in nodes.iter().enumerate() {
            for c in 0..2 {
                let u = self.nodal[2 * n + c];
                w[c] += u * val[a];
                d[c][0] += u * grad[a][0];
                d[c][1] += u * grad[a][1];
            }
        }
        (w, d)
    }
}

#[inline]
pub fn rot(d: &Mat2) -> f64 {
    d[1][0] - d[0][1]
}

#[inline]
pub fn div(d: &Mat2) -> f64 {
    d[0][0] + d[1][1]
}

/// A P2 scalar in `S_h` by nodal values.
#[derive(Debug, Clone)]
pub struct P2Function {
    spaces: Arc<ThSpaces>,
    nodal: Vec<f64>,
}

impl P2Function {
    pub fn from_free(spaces: Arc<ThSpaces>, free: &[f64]) -> Result<Self> {
        if free.len() != spaces.dim_s() {
            return Err(FemError::Dimension {
                expected: spaces.dim_s(),
                found: free.len(),
            });
        }
        let nodal = spaces.s_map.iter().map(|m| m.map_or(0.0, |i| free[i])).collect();
        Ok(Self { spaces, nodal })
    }

    pub fn nodal(&self) -> &[f64] {
        &self.nodal
    }

    pub fn free(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.spaces.dim_s()];
        for (n, m) in self.spaces.s_map.iter().enumerate() {
            if let Some(i) = m {
                out[*i] = self.nodal[n];
            }
        }
        out
    }

    /// Value and gradient on triangle `t`.
    pub fn eval_on(&self, t: usize, bary: &Barycentric, p: Point) -> (f64, [f64; 2]) {
        let (val, grad) = bary.p2(p);
        let nodes = self.spaces.tri_nodes[t];
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (a, &n) in nodes.iter().enumerate() {
            let u = self.nodal[n];
            v += u * val[a];
            g[0] += u * grad[a][0];
            g[1] += u * grad[a][1];
        }
        (v, g)
    }
}

/// Saddle-point solution `(w_h, p_h, λ)` with the recovered `u_h`.
#[derive(Debug, Clone)]
pub struct MixedSolution {
    pub w: ThField,
    /// P1 multiplier values at the mesh vertices.
    pub p: Vec<f64>,
    pub mean_multiplier: f64,
    pub u: P2Function,
    /// `max_k |b(w_h, ψ_k)|` over the P1 basis.
    pub constraint_residual: f64,
}

impl MixedSolution {
    pub fn spaces(&self) -> &Arc<ThSpaces> {
        self.w.spaces()
    }

    pub fn eval_p_on(&self, t: usize, bary: &Barycentric, x: Point) -> f64 {
        let l = bary.at(x);
        let v = self.spaces().mesh().triangles()[t].vertices;
        (0..3).map(|i| l[i] * self.p[v[i]]).sum()
    }
}

/// Assembles `[[Ã, Bᵀ, 0], [B, 0, m], [0, mᵀ, 0]]` and `((f, τ(φ_i)), 0, 0)`.
pub fn assemble_mixed<F: Fn(Point) -> f64>(
    spaces: &ThSpaces,
    coeff: &CoefficientField,
    formulation: Formulation,
    stab: &StabilizationParams,
    f: F,
    quad: &QuadratureSettings,
) -> Result<(SparseMatrix, Vec<f64>)> {
    if stab.formulation != formulation {
        return Err(FemError::Parameter(format!(
            "stabilization built for {:?} used with {:?}",
            stab.formulation, formulation
        )));
    }
    let rule = tri_rule(quad)?;
    let n = spaces.system_size();
    let q0 = spaces.n_w;
    let lag = n - 1;
    let s2 = stab.sigma_lambda * stab.sigma_lambda;
    let ntri = spaces.mesh.triangles().len();
    let mut triplets = TripletList::with_capacity(n, n, ntri * 220);
    let mut rhs = vec![0.0; n];
    for t in 0..ntri {
        let corners = spaces.mesh.corners(t);
        let bary = Barycentric::new(corners);
        let nodes = spaces.tri_nodes[t];
        let verts = spaces.mesh.triangles()[t].vertices;
        // local W dof 2a+c
        let mut k = [[0.0; 12]; 12];
        let mut b = [[0.0; 12]; 3];
        let mut fl = [0.0; 12];
        let mut ml = [0.0; 3];
        for (p, w) in spaces.mesh.geometry(t).quadrature_points(&rule, quad.subdivision)? {
            let a = coeff.eval(p);
            let (_, grad) = bary.p2(p);
            let lam = bary.at(p);
            let fp = f(p);
            let mut trial = [0.0; 12];
            let mut test = [0.0; 12];
            let mut rt = [0.0; 12];
            let am = a.to_mat();
            for (ai, g) in grad.iter().enumerate() {
                for c in 0..2 {
                    let mut d = [[0.0; 2]; 2];
                    d[c] = *g;
                    let i = 2 * ai + c;
                    trial[i] = am[c][0] * g[0] + am[c][1] * g[1];
                    test[i] = formulation.test_operator(&a, &d);
                    rt[i] = rot(&d);
                }
            }
            for i in 0..12 {
                fl[i] += w * fp * test[i];
                for j in 0..12 {
                    k[i][j] += w * (trial[j] * test[i] + s2 * rt[j] * rt[i]);
                }
                for q in 0..3 {
                    b[q][i] += w * rt[i] * lam[q];
                }
            }
            for q in 0..3 {
                ml[q] += w * lam[q];
            }
        }
        let gidx: Vec<Option<usize>> = (0..12).map(|i| spaces.w_map[2 * nodes[i / 2] + i % 2]).collect();
        for i in 0..12 {
            let Some(gi) = gidx[i] else { continue };
            rhs[gi] += fl[i];
            for j in 0..12 {
                if let Some(gj) = gidx[j] {
                    triplets.push(gi, gj, k[i][j]);
                }
            }
            for q in 0..3 {
                let gq = q0 + verts[q];
                triplets.push(gq, gi, b[q][i]);
                triplets.push(gi, gq, b[q][i]);
            }
        }
        for q in 0..3 {
            let gq = q0 + verts[q];
            triplets.push(gq, lag, ml[q]);
            triplets.push(lag, gq, ml[q]);
        }
    }
    Ok((triplets.compress()?, rhs))
}

/// Solves `(∇u_h, ∇z) = (w_h, ∇z)` for all `z ∈ S_h`.
pub fn recover_primal(spaces: &Arc<ThSpaces>, w: &ThField, quad: &QuadratureSettings) -> Result<P2Function> {
    project_gradient(spaces, |t, bary, p| w.eval_on(t, bary, p).0, quad)
}

/// `H¹₀` projection of a piecewise vector field `g(t, bary, p)` onto `∇S_h`.
pub fn project_gradient<G: Fn(usize, &Barycentric, Point) -> [f64; 2]>(
    spaces: &Arc<ThSpaces>,
    g: G,
    quad: &QuadratureSettings,
) -> Result<P2Function> {
    let n = spaces.n_s;
    let rule = tri_rule(quad)?;
    let ntri = spaces.mesh.triangles().len();
    let mut triplets = TripletList::with_capacity(n, n, ntri * 36);
    let mut rhs = vec![0.0; n];
    for t in 0..ntri {
        let bary = Barycentric::new(spaces.mesh.corners(t));
        let nodes = spaces.tri_nodes[t];
        let mut k = [[0.0; 6]; 6];
        let mut fl = [0.0; 6];
        for (p, wt) in spaces.mesh.geometry(t).quadrature_points(&rule, quad.subdivision)? {
            let (_, grad) = bary.p2(p);
            let wv = g(t, &bary, p);
            for i in 0..6 {
                fl[i] += wt * (wv[0] * grad[i][0] + wv[1] * grad[i][1]);
                for j in 0..6 {
                    k[i][j] += wt * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                }
            }
        }
        for i in 0..6 {
            let Some(gi) = spaces.s_map[nodes[i]] else { continue };
            rhs[gi] += fl[i];
            for j in 0..6 {
                if let Some(gj) = spaces.s_map[nodes[j]] {
                    triplets.push(gi, gj, k[i][j]);
                }
            }
        }
    }
    let x = if rhs.iter().all(|&v| v == 0.0) || n == 0 {
        vec![0.0; n]
    } else {
        solve_direct(&triplets.compress()?, &rhs)?
    };
    P2Function::from_free(spaces.clone(), &x)
}

pub fn solve_mixed<F: Fn(Point) -> f64>(
    spaces: Arc<ThSpaces>,
    coeff: &CoefficientField,
    formulation: Formulation,
    stab: &StabilizationParams,
    f: F,
    quad: &QuadratureSettings,
) -> Result<MixedSolution> {
    if formulation == Formulation::NonSymmetric && (stab.lambda - 1.0).abs() >= coeff.epsilon.sqrt() {
        return Err(FemError::Parameter(format!(
            "nonsymmetric scheme requires |lambda-1| < sqrt(eps), got lambda = {}",
            stab.lambda
        )));
    }
    let (k, rhs) = assemble_mixed(&spaces, coeff, formulation, stab, f, quad)?;
    let x = if rhs.iter().all(|&v| v == 0.0) {
        vec![0.0; rhs.len()]
    } else {
        solve_direct(&k, &rhs)?
    };
    let n_w = spaces.n_w;
    let nv = spaces.mesh.vertices().len();
    // b(w_h, ψ_k) rows of the assembled system without the multiplier column
    let kx = k.matvec(&x)?;
    let lag = x[n_w + nv];
    let constraint_residual = (0..nv)
        .map(|q| {
            let row = n_w + q;
            (kx[row] - k.get(row, n_w + nv) * lag).abs()
        })
        .fold(0.0, f64::max);
    let w = ThField::new(spaces.clone(), x[..n_w].to_vec())?;
    let u = recover_primal(&spaces, &w, quad)?;
    Ok(MixedSolution {
        w,
        p: x[n_w..n_w + nv].to_vec(),
        mean_multiplier: lag,
        u,
        constraint_residual,
    })
}
