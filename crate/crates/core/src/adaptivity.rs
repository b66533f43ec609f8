//! Residual estimators, marking and the solve–estimate–mark–refine loop.

use std::sync::Arc;

use crate::bfs::{build_bfs_space, solve_conforming_detailed, DiscreteFunctionH2};
use crate::coefficients::{derived_constants, CoefficientField, StabilizationParams};
use crate::coefficients::Formulation;
use crate::error::{FemError, Result};
use crate::experiments::{compute_errors, efficiency_index, ProblemSpec};
use crate::mesh_quad::{initial_quad_mesh, refine_quads, QuadMesh};
use crate::mesh_tri::{check_mesh, initial_tri_mesh, nvb_refine, refine_uniform, TriMesh};
use crate::mixed::{build_th_spaces, rot, solve_mixed, Barycentric, MixedSolution};
use crate::quadrature::{gauss_rectangle, gauss_triangle, QuadratureSettings};
use crate::Point;

/// A solved discrete problem of either kind.
#[derive(Debug, Clone)]
pub enum DiscreteSolution {
    Conforming(DiscreteFunctionH2),
    Mixed(MixedSolution),
}

/// Per-element squared estimator contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorField {
    contributions: Vec<f64>,
}

impl EstimatorField {
    pub fn new(contributions: Vec<f64>) -> Result<Self> {
        if let Some(i) = contributions.iter().position(|c| !(*c >= 0.0)) {
            return Err(FemError::Parameter(format!(
                "estimator contribution {i} is {} (must be >= 0)",
                contributions[i]
            )));
        }
        Ok(Self { contributions })
    }

    pub fn contributions(&self) -> &[f64] {
        &self.contributions
    }

    pub fn total_squared(&self) -> f64 {
        self.contributions.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.total_squared().sqrt()
    }
}

/// `η²(T) = ‖A:D²u_h − f‖²_T` or `‖A:Dw_h − f‖²_T + σ²‖rot w_h‖²_T`.
pub fn estimate<F: Fn(Point) -> f64>(
    solution: &DiscreteSolution,
    coeff: &CoefficientField,
    f: F,
    stab: Option<&StabilizationParams>,
    quad: &QuadratureSettings,
) -> Result<EstimatorField> {
    let mut out = Vec::new();
    match solution {
        DiscreteSolution::Conforming(u) => {
            let rule = gauss_rectangle(quad.rect_points)?;
            for (c, cell) in u.space().mesh().cells().iter().enumerate() {
                let mut e = 0.0;
                for (p, w) in cell.geometry().quadrature_points(&rule, quad.subdivision)? {
                    let r = coeff.eval(p).contract_sym(&u.eval_on_cell(c, p).hessian) - f(p);
                    e += w * r * r;
                }
                out.push(e);
            }
        }
        DiscreteSolution::Mixed(m) => {
            let stab = stab.ok_or_else(|| FemError::Parameter("mixed estimator needs stabilization constants".into()))?;
            let s2 = stab.sigma_lambda * stab.sigma_lambda;
            let rule = gauss_triangle(quad.tri_degree)?;
            let mesh = m.spaces().mesh();
            for t in 0..mesh.triangles().len() {
                let bary = Barycentric::new(mesh.corners(t));
                let mut e = 0.0;
                for (p, w) in mesh.geometry(t).quadrature_points(&rule, quad.subdivision)? {
                    let (_, d) = m.w.eval_on(t, &bary, p);
                    let r = coeff.eval(p).contract(&d) - f(p);
                    e += w * (r * r + s2 * rot(&d).powi(2));
                }
                out.push(e);
            }
        }
    }
    EstimatorField::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Marking {
    Doerfler,
    Maximum,
}

/// Marked element ids in ascending order.
///
/// Dörfler: contributions sorted descending (ties by ascending id), shortest
/// prefix whose sum reaches `θ·Σ`. Maximum: every element attaining the max.
pub fn mark(field: &EstimatorField, theta: f64, marking: Marking) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(FemError::Parameter(format!("theta must lie in (0, 1], got {theta}")));
    }
    let c = field.contributions();
    let total = field.total_squared();
    if total == 0.0 {
        return Ok(Vec::new());
    }
    let mut out = match marking {
        Marking::Maximum => {
            let max = c.iter().copied().fold(0.0, f64::max);
            (0..c.len()).filter(|&i| c[i] == max).collect()
        }
        Marking::Doerfler => {
            let mut order: Vec<usize> = (0..c.len()).collect();
            order.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
            let goal = theta * total;
            let mut sum = 0.0;
            let mut taken = Vec::new();
            for i in order {
                taken.push(i);
                sum += c[i];
                if sum >= goal {
                    break;
                }
            }
            taken
        }
    };
    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Bogner–Fox–Schmit conforming elements on rectangles.
    Bfs,
    /// Stabilized Taylor–Hood mixed elements on triangles.
    TaylorHood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Refinement {
    Uniform,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub theta: f64,
    pub marking: Marking,
    pub refinement: Refinement,
    /// Only levels with at most this many dofs are solved (level 0 always is).
    pub max_ndof: usize,
    pub formulation: Formulation,
    pub lambda: f64,
    pub quad: QuadratureSettings,
    /// Validate mesh invariants after every refinement.
    pub check_mesh: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            theta: 0.3,
            marking: Marking::Doerfler,
            refinement: Refinement::Adaptive,
            max_ndof: 20_000,
            formulation: Formulation::LeastSquares,
            lambda: 1.0,
            quad: QuadratureSettings::default(),
            check_mesh: cfg!(debug_assertions),
        }
    }
}

/// One row of a convergence history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub ndof: usize,
    pub elements: usize,
    pub h_max: f64,
    pub err_h2: Option<f64>,
    pub err_grad: Option<f64>,
    pub err_l2: Option<f64>,
    pub eta: f64,
    pub efficiency: Option<f64>,
    /// `‖p_h‖` for the mixed method.
    pub p_l2: Option<f64>,
    /// Conforming: normalized Galerkin residual; mixed: `max_k |b(w_h, ψ_k)|`.
    pub algebraic_residual: f64,
    pub rhs_l2: f64,
}

/// Mesh of one level.
#[derive(Debug, Clone)]
pub enum MeshSnapshot {
    Quad(QuadMesh),
    Tri(TriMesh),
}

impl MeshSnapshot {
    pub fn dump(&self) -> String {
        match self {
            MeshSnapshot::Quad(m) => m.dump(),
            MeshSnapshot::Tri(m) => m.dump(),
        }
    }

    pub fn element_count(&self) -> usize {
        match self {
            MeshSnapshot::Quad(m) => m.cells().len(),
            MeshSnapshot::Tri(m) => m.triangles().len(),
        }
    }

    pub fn centroids(&self) -> Vec<Point> {
        match self {
            MeshSnapshot::Quad(m) => m.cells().iter().map(|c| c.centroid()).collect(),
            MeshSnapshot::Tri(m) => (0..m.triangles().len()).map(|t| m.centroid(t)).collect(),
        }
    }

    /// Element outlines as closed polygons.
    pub fn polygons(&self) -> Vec<Vec<Point>> {
        match self {
            MeshSnapshot::Quad(m) => m.cells().iter().map(|c| c.corners().to_vec()).collect(),
            MeshSnapshot::Tri(m) => (0..m.triangles().len()).map(|t| m.corners(t).to_vec()).collect(),
        }
    }
}

/// Records and meshes per level, plus the error that stopped the run, if any.
#[derive(Debug)]
pub struct AdaptiveRun {
    pub records: Vec<ConvergenceRecord>,
    pub meshes: Vec<MeshSnapshot>,
    pub failure: Option<FemError>,
}

impl AdaptiveRun {
    pub fn final_mesh(&self) -> Option<&MeshSnapshot> {
        self.meshes.last()
    }
}

fn l2_rhs_quad(spec: &ProblemSpec, mesh: &QuadMesh, quad: &QuadratureSettings) -> Result<f64> {
    let rule = gauss_rectangle(quad.rect_points)?;
    let mut s = 0.0;
    for c in mesh.cells() {
        for (p, w) in c.geometry().quadrature_points(&rule, quad.subdivision)? {
            s += w * spec.rhs(p).powi(2);
        }
    }
    Ok(s.sqrt())
}

fn l2_rhs_tri(spec: &ProblemSpec, mesh: &TriMesh, quad: &QuadratureSettings) -> Result<f64> {
    let rule = gauss_triangle(quad.tri_degree)?;
    let mut s = 0.0;
    for t in 0..mesh.triangles().len() {
        for (p, w) in mesh.geometry(t).quadrature_points(&rule, quad.subdivision)? {
            s += w * spec.rhs(p).powi(2);
        }
    }
    Ok(s.sqrt())
}

fn p_norm(m: &MixedSolution, quad: &QuadratureSettings) -> Result<f64> {
    let rule = gauss_triangle(quad.tri_degree)?;
    let mesh = m.spaces().mesh();
    let mut s = 0.0;
    for t in 0..mesh.triangles().len() {
        let bary = Barycentric::new(mesh.corners(t));
        for (p, w) in mesh.geometry(t).quadrature_points(&rule, quad.subdivision)? {
            s += w * m.eval_p_on(t, &bary, p).powi(2);
        }
    }
    Ok(s.sqrt())
}

#[allow(clippy::too_many_arguments)]
fn record(
    level: usize,
    ndof: usize,
    elements: usize,
    h_max: f64,
    solution: &DiscreteSolution,
    spec: &ProblemSpec,
    config: &AdaptiveConfig,
    stab: &StabilizationParams,
    residual: f64,
    rhs_l2: f64,
) -> Result<(ConvergenceRecord, EstimatorField)> {
    let field = estimate(solution, &spec.coefficient, |p| spec.rhs(p), Some(stab), &config.quad)?;
    let eta = field.total();
    let errors = compute_errors(solution, spec, &config.quad)?;
    let p_l2 = match solution {
        DiscreteSolution::Mixed(m) => Some(p_norm(m, &config.quad)?),
        DiscreteSolution::Conforming(_) => None,
    };
    Ok((
        ConvergenceRecord {
            level,
            ndof,
            elements,
            h_max,
            err_h2: errors.map(|e| e.h2),
            err_grad: errors.map(|e| e.grad),
            err_l2: errors.map(|e| e.l2),
            eta,
            efficiency: errors.and_then(|e| efficiency_index(eta, e.h2)),
            p_l2,
            algebraic_residual: residual,
            rhs_l2,
        },
        field,
    ))
}

fn validate(config: &AdaptiveConfig) -> Result<()> {
    if !(config.theta > 0.0 && config.theta <= 1.0) {
        return Err(FemError::Parameter(format!("theta must lie in (0, 1], got {}", config.theta)));
    }
    Ok(())
}

/// Runs the loop until the next level would exceed `max_ndof` or `η = 0`.
///
/// A solver failure stops the loop; the records collected so far are kept.
pub fn run_adaptive(spec: &ProblemSpec, method: Method, config: &AdaptiveConfig) -> Result<AdaptiveRun> {
    validate(config)?;
    let stab = derived_constants(&spec.coefficient, config.formulation, config.lambda)?;
    let mut run = AdaptiveRun {
        records: Vec::new(),
        meshes: Vec::new(),
        failure: None,
    };
    match method {
        Method::Bfs => {
            let mut mesh = initial_quad_mesh(spec.quad_mesh)?;
            for level in 0.. {
                let space = Arc::new(build_bfs_space(&mesh));
                if level > 0 && space.ndof() > config.max_ndof {
                    break;
                }
                let solved = solve_conforming_detailed(
                    space.clone(),
                    &spec.coefficient,
                    config.formulation,
                    |p| spec.rhs(p),
                    &config.quad,
                );
                let solved = match solved {
                    Ok(s) => s,
                    Err(e) => {
                        run.failure = Some(e);
                        break;
                    }
                };
                let rhs_l2 = l2_rhs_quad(spec, &mesh, &config.quad)?;
                let (rec, field) = record(
                    level,
                    space.ndof(),
                    mesh.cells().len(),
                    mesh.h_max(),
                    &DiscreteSolution::Conforming(solved.solution),
                    spec,
                    config,
                    &stab,
                    solved.galerkin_residual,
                    rhs_l2,
                )?;
                run.records.push(rec);
                run.meshes.push(MeshSnapshot::Quad(mesh.clone()));
                let marked = match config.refinement {
                    Refinement::Uniform => (0..mesh.cells().len()).collect(),
                    Refinement::Adaptive => mark(&field, config.theta, config.marking)?,
                };
                if rec.eta == 0.0 || marked.is_empty() {
                    break;
                }
                mesh = refine_quads(&mesh, &marked)?;
                if config.check_mesh {
                    mesh.check_admissible()?;
                }
            }
        }
        Method::TaylorHood => {
            let mut mesh = initial_tri_mesh(spec.tri_mesh)?;
            for level in 0.. {
                let spaces = Arc::new(build_th_spaces(&mesh));
                if level > 0 && spaces.ndof() > config.max_ndof {
                    break;
                }
                let solved = solve_mixed(
                    spaces.clone(),
                    &spec.coefficient,
                    config.formulation,
                    &stab,
                    |p| spec.rhs(p),
                    &config.quad,
                );
                let solved = match solved {
                    Ok(s) => s,
                    Err(e) => {
                        run.failure = Some(e);
                        break;
                    }
                };
                let residual = solved.constraint_residual;
                let rhs_l2 = l2_rhs_tri(spec, &mesh, &config.quad)?;
                let (rec, field) = record(
                    level,
                    spaces.ndof(),
                    mesh.triangles().len(),
                    mesh.h_max(),
                    &DiscreteSolution::Mixed(solved),
                    spec,
                    config,
                    &stab,
                    residual,
                    rhs_l2,
                )?;
                run.records.push(rec);
                run.meshes.push(MeshSnapshot::Tri(mesh.clone()));
                if rec.eta == 0.0 {
                    break;
                }
                mesh = match config.refinement {
                    Refinement::Uniform => refine_uniform(&mesh)?,
                    Refinement::Adaptive => {
                        let marked = mark(&field, config.theta, config.marking)?;
                        if marked.is_empty() {
                            break;
                        }
                        nvb_refine(&mesh, &marked)?
                    }
                };
                if config.check_mesh {
                    check_mesh(&mesh)?;
                }
            }
        }
    }
    Ok(run)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
