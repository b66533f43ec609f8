use std::sync::Arc;

use cordes_fem::adaptivity::{estimate, run_adaptive, AdaptiveConfig, DiscreteSolution, Method, Refinement};
use cordes_fem::bfs::{build_bfs_space, interpolate, solve_conforming};
use cordes_fem::coefficients::{derived_constants, Formulation};
use cordes_fem::experiments::{compute_errors, exact_jet_unchecked, exact_solution, problem_spec, Experiment};
use cordes_fem::mesh_quad::{initial_quad_mesh, refine_quads};
use cordes_fem::quadrature::{gauss_rectangle, QuadratureSettings};

fn config(refinement: Refinement, max_ndof: usize) -> AdaptiveConfig {
    AdaptiveConfig {
        refinement,
        max_ndof,
        check_mesh: true,
        ..AdaptiveConfig::default()
    }
}

#[test]
fn ls_error_is_quasi_optimal_against_the_interpolant() {
    let spec = problem_spec(Experiment::Smooth, true).unwrap();
    let stab = derived_constants(&spec.coefficient, Formulation::LeastSquares, 1.0).unwrap();
    let constant = spec.coefficient.a_sup / stab.c_coercivity;
    let quad = QuadratureSettings::default();
    let mut mesh = initial_quad_mesh(spec.quad_mesh).unwrap();
    for _ in 0..4 {
        let space = Arc::new(build_bfs_space(&mesh));
        let uh = solve_conforming(space.clone(), &spec.coefficient, Formulation::LeastSquares, |p| spec.rhs(p), &quad)
            .unwrap();
        let ih = interpolate(space, |p| {
            // first derivatives are continuous across the kink lines
            let j = exact_jet_unchecked(Experiment::Smooth, p).unwrap();
            [j.value, j.gradient[0], j.gradient[1], j.hessian.a12]
        })
        .unwrap();
        let err = compute_errors(&DiscreteSolution::Conforming(uh), &spec, &quad).unwrap().unwrap().h2;
        let best = compute_errors(&DiscreteSolution::Conforming(ih), &spec, &quad).unwrap().unwrap().h2;
        assert!(err <= constant * best, "{err} > {constant} * {best}");
        let all: Vec<usize> = (0..mesh.cells().len()).collect();
        mesh = refine_quads(&mesh, &all).unwrap();
    }
}

#[test]
fn ls_residual_decreases_under_uniform_refinement() {
    for e in [Experiment::Smooth, Experiment::Singular] {
        let spec = problem_spec(e, true).unwrap();
        let run = run_adaptive(&spec, Method::Bfs, &config(Refinement::Uniform, 5000)).unwrap();
        assert!(run.records.len() >= 4);
        for w in run.records.windows(2) {
            assert!(w[1].eta <= w[0].eta * (1.0 + 1e-10), "{e:?}: {} -> {}", w[0].eta, w[1].eta);
        }
    }
}

#[test]
fn conforming_estimator_matches_contracted_error_per_element() {
    let spec = problem_spec(Experiment::Smooth, true).unwrap();
    let mut mesh = initial_quad_mesh(spec.quad_mesh).unwrap();
    mesh = refine_quads(&mesh, &[0, 3]).unwrap();
    let quad = QuadratureSettings::default();
    let space = Arc::new(build_bfs_space(&mesh));
    let uh = solve_conforming(space, &spec.coefficient, Formulation::LeastSquares, |p| spec.rhs(p), &quad).unwrap();
    let fine = QuadratureSettings {
        rect_points: 7,
        subdivision: 1,
        ..quad
    };
    let field = estimate(&DiscreteSolution::Conforming(uh.clone()), &spec.coefficient, |p| spec.rhs(p), None, &fine)
        .unwrap();
    let rule = gauss_rectangle(7).unwrap();
    for (c, cell) in mesh.cells().iter().enumerate() {
        let mut direct = 0.0;
        for (p, w) in cell.geometry().quadrature_points(&rule, 1).unwrap() {
            let a = spec.coefficient.eval(p);
            let exact = exact_solution(Experiment::Smooth, p).unwrap().hessian;
            let hh = uh.eval_on_cell(c, p).hessian;
            let d = cordes_fem::coefficients::SymMatrix2::new(hh.a11 - exact.a11, hh.a12 - exact.a12, hh.a22 - exact.a22);
            direct += w * a.contract_sym(&d).powi(2);
        }
        let eta = field.contributions()[c];
        assert!((eta - direct).abs() <= 1e-10 * direct.max(1e-12), "cell {c}: {eta} vs {direct}");
    }
}

#[test]
fn mixed_estimator_is_reliable_and_efficient() {
    for e in [Experiment::Smooth, Experiment::Singular] {
        let spec = problem_spec(e, true).unwrap();
        let stab = derived_constants(&spec.coefficient, Formulation::LeastSquares, 1.0).unwrap();
        let (lower, upper) = stab.mixed_efficiency_bounds(spec.coefficient.a_sup);
        for refinement in [Refinement::Uniform, Refinement::Adaptive] {
            let run = run_adaptive(&spec, Method::TaylorHood, &config(refinement, 4000)).unwrap();
            for r in &run.records {
                let err = r.err_h2.unwrap();
                assert!(lower * err <= r.eta, "{e:?} level {}: {} < {lower} * {err}", r.level, r.eta);
                assert!(r.eta <= upper * err, "{e:?} level {}: {} > {upper} * {err}", r.level, r.eta);
            }
        }
    }
}

#[test]
fn conforming_estimator_is_reliable() {
    for e in [Experiment::Smooth, Experiment::Singular] {
        let spec = problem_spec(e, true).unwrap();
        let c = derived_constants(&spec.coefficient, Formulation::LeastSquares, 1.0).unwrap().c_coercivity;
        let run = run_adaptive(&spec, Method::Bfs, &config(Refinement::Adaptive, 4000)).unwrap();
        for r in &run.records {
            assert!(c * r.err_h2.unwrap() <= r.eta * (1.0 + 1e-3), "{e:?} level {}", r.level);
        }
    }
}

#[test]
fn estimator_trend_is_monotone() {
    for e in [Experiment::Smooth, Experiment::Singular] {
        let spec = problem_spec(e, true).unwrap();
        for method in [Method::Bfs, Method::TaylorHood] {
            let run = run_adaptive(&spec, method, &config(Refinement::Adaptive, 4000)).unwrap();
            let increases = run.records.windows(2).filter(|w| w[1].eta > w[0].eta).count();
            assert!(increases <= 1, "{e:?} {method:?}: {increases} increases");
        }
    }
}

#[test]
fn ns_formulation_converges_on_smooth_problem() {
    let spec = problem_spec(Experiment::Smooth, true).unwrap();
    for method in [Method::Bfs, Method::TaylorHood] {
        let cfg = AdaptiveConfig {
            formulation: Formulation::NonSymmetric,
            ..config(Refinement::Uniform, 3000)
        };
        let run = run_adaptive(&spec, method, &cfg).unwrap();
        let errs: Vec<f64> = run.records.iter().map(|r| r.err_h2.unwrap()).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{method:?}: {errs:?}");
        let last = &run.records[run.records.len() - 2..];
        let s = cordes_fem::adaptivity::loglog_slope(&[
            (last[0].ndof as f64, last[0].err_h2.unwrap()),
            (last[1].ndof as f64, last[1].err_h2.unwrap()),
        ])
        .unwrap();
        assert!((-1.2..=-0.8).contains(&s), "{method:?}: slope {s}");
    }
}
