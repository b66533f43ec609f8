//! Benchmark problems on Ω = (−1,1)², exact solutions and error norms.

use crate::adaptivity::DiscreteSolution;
use crate::coefficients::{CoefficientField, SymMatrix2};
use crate::error::{FemError, Result};
use crate::mesh_quad::QuadMeshSpec;
use crate::mesh_tri::TriMeshSpec;
use crate::mixed::Barycentric;
use crate::quadrature::{gauss_rectangle, gauss_triangle, ElementGeometry, QuadratureSettings};
use crate::{Jet, Point};

/// Interior point where the non-matching initial meshes are split.
pub const NON_MATCHING_CENTER: Point = [0.1, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    /// Smooth solution with kinks of the Hessian along the axes.
    Smooth,
    /// Singular solution on a three-quarter disc.
    Singular,
    /// `f = 1` with the transformed discontinuous coefficient; no exact solution.
    Transformed,
}

impl Experiment {
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Experiment::Smooth),
            2 => Ok(Experiment::Singular),
            3 => Ok(Experiment::Transformed),
            _ => Err(FemError::Parameter(format!("unknown experiment {n}; expected 1, 2 or 3"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Experiment::Smooth => 1,
            Experiment::Singular => 2,
            Experiment::Transformed => 3,
        }
    }

    pub fn has_exact_solution(self) -> bool {
        self != Experiment::Transformed
    }
}

fn sign(t: f64) -> f64 {
    if t < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `h(t) = t(1 − e^{1−|t|})` with its first two derivatives.
fn smooth_factor(t: f64) -> [f64; 3] {
    let e = (1.0 - t.abs()).exp();
    [t * (1.0 - e), 1.0 - e + t.abs() * e, sign(t) * (2.0 - t.abs()) * e]
}

fn smooth_jet(p: Point) -> Jet {
    let hx = smooth_factor(p[0]);
    let hy = smooth_factor(p[1]);
    Jet {
        value: hx[0] * hy[0],
        gradient: [hx[1] * hy[0], hx[0] * hy[1]],
        hessian: SymMatrix2::new(hx[2] * hy[0], hx[1] * hy[1], hx[0] * hy[2]),
    }
}

/// Polar angle in `[0, 2π)`.
fn polar_angle(p: Point) -> f64 {
    let t = p[1].atan2(p[0]);
    if t < 0.0 {
        t + std::f64::consts::TAU
    } else {
        t
    }
}

const SECTOR_ANGLE: f64 = 1.5 * std::f64::consts::PI;

fn singular_jet(p: Point) -> Jet {
    let r = p[0].hypot(p[1]);
    let th = polar_angle(p);
    if r >= 1.0 || r == 0.0 || th >= SECTOR_ANGLE {
        return Jet::ZERO;
    }
    let q = 1.0 - r;
    let rr = [
        r.powf(5.0 / 3.0) * q.powf(2.5),
        (5.0 / 3.0) * r.powf(2.0 / 3.0) * q.powf(2.5) - 2.5 * r.powf(5.0 / 3.0) * q.powf(1.5),
        (10.0 / 9.0) * r.powf(-1.0 / 3.0) * q.powf(2.5) - (25.0 / 3.0) * r.powf(2.0 / 3.0) * q.powf(1.5)
            + 3.75 * r.powf(5.0 / 3.0) * q.sqrt(),
    ];
    let s = (2.0 * th / 3.0).sin().max(0.0);
    let c = (2.0 * th / 3.0).cos();
    let ss = [
        s.powf(2.5),
        (5.0 / 3.0) * s.powf(1.5) * c,
        (5.0 / 3.0) * (s.sqrt() * c * c - (2.0 / 3.0) * s.powf(2.5)),
    ];
    let (u, ur, ut) = (rr[0] * ss[0], rr[1] * ss[0], rr[0] * ss[1]);
    let (urr, urt, utt) = (rr[2] * ss[0], rr[1] * ss[1], rr[0] * ss[2]);
    let (sn, cs) = (th.sin(), th.cos());
    let a = ur / r + utt / (r * r);
    let b = urt / r - ut / (r * r);
    Jet {
        value: u,
        gradient: [cs * ur - sn * ut / r, sn * ur + cs * ut / r],
        hessian: SymMatrix2::new(
            cs * cs * urr + sn * sn * a - 2.0 * sn * cs * b,
            sn * cs * (urr - ur / r - utt / (r * r)) + (cs * cs - sn * sn) * b,
            sn * sn * urr + cs * cs * a + 2.0 * sn * cs * b,
        ),
    }
}

/// Exact solution without checks; one-sided limits on kink lines.
pub fn exact_jet_unchecked(experiment: Experiment, p: Point) -> Option<Jet> {
    match experiment {
        Experiment::Smooth => Some(smooth_jet(p)),
        Experiment::Singular => Some(singular_jet(p)),
        Experiment::Transformed => None,
    }
}

fn check_closure(p: Point) -> Result<()> {
    if p[0].abs() > 1.0 || p[1].abs() > 1.0 || !p[0].is_finite() || !p[1].is_finite() {
        Err(FemError::OutsideDomain(p[0], p[1]))
    } else {
        Ok(())
    }
}

fn no_exact(experiment: Experiment) -> FemError {
    FemError::Parameter(format!("experiment {} has no exact solution", experiment.number()))
}

/// Exact value; defined everywhere in the closure of Ω.
pub fn exact_value(experiment: Experiment, p: Point) -> Result<f64> {
    check_closure(p)?;
    exact_jet_unchecked(experiment, p)
        .map(|j| j.value)
        .ok_or_else(|| no_exact(experiment))
}

/// Whether `p` lies on a line where the exact Hessian is discontinuous or singular.
pub fn on_kink(experiment: Experiment, p: Point) -> bool {
    match experiment {
        Experiment::Smooth => p[0] == 0.0 || p[1] == 0.0,
        Experiment::Singular => {
            let r = p[0].hypot(p[1]);
            r == 0.0 || r == 1.0 || (p[1] == 0.0 && p[0] > 0.0) || (p[0] == 0.0 && p[1] < 0.0)
        }
        Experiment::Transformed => false,
    }
}

/// Value, gradient and Hessian of the exact solution.
pub fn exact_solution(experiment: Experiment, p: Point) -> Result<Jet> {
    check_closure(p)?;
    if !experiment.has_exact_solution() {
        return Err(no_exact(experiment));
    }
    if on_kink(experiment, p) {
        return Err(FemError::DegeneratePoint(p[0], p[1]));
    }
    Ok(exact_jet_unchecked(experiment, p).expect("exact solution exists"))
}

/// Axis-aligned bounding box of an element.
fn bbox(g: &ElementGeometry) -> (Point, Point) {
    match g {
        ElementGeometry::Rectangle { min, max } => (*min, *max),
        ElementGeometry::Triangle(c) => {
            let lo = [c[0][0].min(c[1][0]).min(c[2][0]), c[0][1].min(c[1][1]).min(c[2][1])];
            let hi = [c[0][0].max(c[1][0]).max(c[2][0]), c[0][1].max(c[1][1]).max(c[2][1])];
            (lo, hi)
        }
    }
}

/// Whether the interior of the element may meet a kink line (conservative).
pub fn is_cut(experiment: Experiment, g: &ElementGeometry) -> bool {
    let (lo, hi) = bbox(g);
    let crosses_x0 = lo[0] < 0.0 && hi[0] > 0.0;
    let crosses_y0 = lo[1] < 0.0 && hi[1] > 0.0;
    match experiment {
        Experiment::Smooth => crosses_x0 || crosses_y0,
        Experiment::Singular => {
            let far = [lo[0].abs().max(hi[0].abs()), lo[1].abs().max(hi[1].abs())];
            let near = [
                if crosses_x0 { 0.0 } else { lo[0].abs().min(hi[0].abs()) },
                if crosses_y0 { 0.0 } else { lo[1].abs().min(hi[1].abs()) },
            ];
            (crosses_y0 && hi[0] > 0.0)
                || (crosses_x0 && lo[1] < 0.0)
                || (near[0].hypot(near[1]) < 1.0 && far[0].hypot(far[1]) > 1.0)
        }
        Experiment::Transformed => false,
    }
}

/// A benchmark: coefficient, right-hand side and initial meshes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub experiment: Experiment,
    pub coefficient: CoefficientField,
    pub matching: bool,
    pub quad_mesh: QuadMeshSpec,
    pub tri_mesh: TriMeshSpec,
}

impl ProblemSpec {
    /// Right-hand side `f`; manufactured as `A:D²u` when `u` is known.
    pub fn rhs(&self, p: Point) -> f64 {
        match exact_jet_unchecked(self.experiment, p) {
            Some(j) => self.coefficient.eval(p).contract_sym(&j.hessian),
            None => 1.0,
        }
    }

    pub fn exact(&self, p: Point) -> Option<Jet> {
        exact_jet_unchecked(self.experiment, p)
    }

    pub fn is_cut(&self, g: &ElementGeometry) -> bool {
        is_cut(self.experiment, g)
    }
}

pub fn problem_spec(experiment: Experiment, matching: bool) -> Result<ProblemSpec> {
    if !matching && experiment != Experiment::Smooth {
        return Err(FemError::Parameter(format!(
            "non-matching initial meshes are only defined for experiment 1, not {}",
            experiment.number()
        )));
    }
    let coefficient = match experiment {
        Experiment::Transformed => CoefficientField::experiment3_transformed(),
        _ => CoefficientField::experiment_sign(),
    };
    let (quad_mesh, tri_mesh) = if matching {
        (QuadMeshSpec::Uniform(2), TriMeshSpec::Criss(2))
    } else {
        (
            QuadMeshSpec::Cross(NON_MATCHING_CENTER),
            TriMeshSpec::CrissCross(NON_MATCHING_CENTER),
        )
    };
    Ok(ProblemSpec {
        experiment,
        coefficient,
        matching,
        quad_mesh,
        tri_mesh,
    })
}

/// Error norms against the exact solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    /// `‖D²u − D²u_h‖` or `‖D²u − Dw_h‖`
    pub h2: f64,
    /// `‖∇u − ∇u_h‖` or `‖∇u − w_h‖`
    pub grad: f64,
    pub l2: f64,
}

fn frobenius_sq(m: [[f64; 2]; 2]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum()
}

/// Elementwise quadrature of the squared errors; `None` without an exact solution.
pub fn compute_errors(
    solution: &DiscreteSolution,
    spec: &ProblemSpec,
    quad: &QuadratureSettings,
) -> Result<Option<ErrorNorms>> {
    if !spec.experiment.has_exact_solution() {
        return Ok(None);
    }
    let cut_level = quad.subdivision.max(2);
    let exact = |p: Point| spec.exact(p).expect("exact solution exists");
    let (mut e2, mut e1, mut e0) = (0.0, 0.0, 0.0);
    match solution {
        DiscreteSolution::Conforming(u) => {
            let rule = gauss_rectangle(quad.rect_points)?;
            for (c, cell) in u.space().mesh().cells().iter().enumerate() {
                let g = cell.geometry();
                let sub = if spec.is_cut(&g) { cut_level } else { quad.subdivision };
                for (p, w) in g.quadrature_points(&rule, sub)? {
                    let (ex, uh) = (exact(p), u.eval_on_cell(c, p));
                    let dh = [
                        [ex.hessian.a11 - uh.hessian.a11, ex.hessian.a12 - uh.hessian.a12],
                        [ex.hessian.a12 - uh.hessian.a12, ex.hessian.a22 - uh.hessian.a22],
                    ];
                    e2 += w * frobenius_sq(dh);
                    e1 += w * ((ex.gradient[0] - uh.gradient[0]).powi(2) + (ex.gradient[1] - uh.gradient[1]).powi(2));
                    e0 += w * (ex.value - uh.value).powi(2);
                }
            }
        }
        DiscreteSolution::Mixed(m) => {
            let rule = gauss_triangle(quad.tri_degree)?;
            let mesh = m.spaces().mesh();
            for t in 0..mesh.triangles().len() {
                let g = mesh.geometry(t);
                let bary = Barycentric::new(mesh.corners(t));
                let sub = if spec.is_cut(&g) { cut_level } else { quad.subdivision };
                for (p, w) in g.quadrature_points(&rule, sub)? {
                    let ex = exact(p);
                    let (wv, dw) = m.w.eval_on(t, &bary, p);
                    let (uv, _) = m.u.eval_on(t, &bary, p);
                    let h = ex.hessian;
                    let dh = [[h.a11 - dw[0][0], h.a12 - dw[0][1]], [h.a12 - dw[1][0], h.a22 - dw[1][1]]];
                    e2 += w * frobenius_sq(dh);
                    e1 += w * ((ex.gradient[0] - wv[0]).powi(2) + (ex.gradient[1] - wv[1]).powi(2));
                    e0 += w * (ex.value - uv).powi(2);
                }
            }
        }
    }
    Ok(Some(ErrorNorms {
        h2: e2.sqrt(),
        grad: e1.sqrt(),
        l2: e0.sqrt(),
    }))
}

/// Estimator over error; `None` when the error vanishes.
pub fn efficiency_index(eta: f64, err_h2: f64) -> Option<f64> {
    (err_h2 > 0.0).then(|| eta / err_h2)
}

/// Distance from `p` to the discontinuity set of the transformed coefficient:
/// the line `x₁ = −1/3` and the curve `x₂ = 1/3 − ∛(x₁ + 1/3)`.
pub fn jump_set_distance(p: Point) -> f64 {
    let line = (p[0] + 1.0 / 3.0).abs();
    // curve (t³ − 1/3, 1/3 − t); parameter range covering Ω
    let (t0, t1) = (-(2.0f64 / 3.0), (4.0f64 / 3.0).cbrt());
    let d2 = |t: f64| {
        let q = [t * t * t - 1.0 / 3.0, 1.0 / 3.0 - t];
        (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)
    };
    let n = 400;
    let step = (t1 - t0) / n as f64;
    let best = (0..=n)
        .map(|i| t0 + i as f64 * step)
        .min_by(|a, b| d2(*a).total_cmp(&d2(*b)))
        .expect("nonempty");
    let (mut lo, mut hi) = ((best - step).max(t0), (best + step).min(t1));
    for _ in 0..60 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if d2(m1) < d2(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    line.min(d2(0.5 * (lo + hi)).sqrt())
}

/// Distance `d` such that `{x ∈ Ω : dist(x, jump set) < d}` covers the given
/// fraction of the area, estimated on a uniform midpoint grid.
pub fn jump_band_width(fraction: f64) -> f64 {
    let n = 300;
    let h = 2.0 / n as f64;
    let mut d: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k % n, k / n);
            jump_set_distance([-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h])
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let idx = ((fraction * d.len() as f64).ceil() as usize).clamp(1, d.len()) - 1;
    d[idx]
}
