use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cordes_fem::adaptivity::ConvergenceRecord;
use cordes_fem_cli::csv::HEADER;
use cordes_fem_cli::{emit_csv, emit_plots};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cordes-fem"))
        .arg("run")
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> String {
    let out = dir.join(name);
    let mut all = args.to_vec();
    all.extend(["--out", out.to_str().unwrap()]);
    let res = cli(&all);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    fs::read_to_string(out).unwrap()
}

fn parse_rows(csv: &str) -> Vec<Vec<Option<f64>>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| (!c.is_empty()).then(|| c.parse().unwrap())).collect())
        .collect()
}

#[test]
fn csv_header_is_fixed() {
    assert_eq!(HEADER, "level,ndof,h_max,err_h2,err_grad,err_l2,eta,efficiency");
}

#[test]
fn one_record_gives_header_and_one_row() {
    let rec = ConvergenceRecord {
        level: 0,
        ndof: 16,
        elements: 4,
        h_max: 1.0,
        err_h2: Some(0.5),
        err_grad: Some(0.25),
        err_l2: None,
        eta: 1.0,
        efficiency: Some(2.0),
        p_l2: None,
        algebraic_residual: 0.0,
        rhs_l2: 1.0,
    };
    let mut buf = Vec::new();
    emit_csv(&[rec], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], HEADER);
    let row = &parse_rows(&text)[0];
    assert_eq!(row.len(), 8);
    assert_eq!(row[1], Some(16.0));
    assert_eq!(row[3], Some(0.5));
    assert_eq!(row[5], None);
    assert_eq!(row[7], Some(2.0));
}

#[test]
fn uniform_run_writes_parseable_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run_to(
        dir.path(),
        "u.csv",
        &["--experiment", "1", "--method", "bfs-ls", "--refinement", "uniform", "--max-ndof", "1000"],
    );
    assert_eq!(csv.lines().next(), Some(HEADER));
    let rows = parse_rows(&csv);
    assert!(rows.len() >= 3);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], Some(i as f64));
        assert!(r[1].unwrap() <= 1000.0 || i == 0);
        assert!(r.iter().all(Option::is_some));
    }
    for w in rows.windows(2) {
        assert!(w[1][3].unwrap() < w[0][3].unwrap());
    }
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--experiment", "2", "--method", "th-ls", "--max-ndof", "800"];
    let a = run_to(dir.path(), "a.csv", &args);
    let b = run_to(dir.path(), "b.csv", &args);
    assert_eq!(a, b);
}

#[test]
fn unknown_solution_leaves_error_columns_empty() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run_to(dir.path(), "e3.csv", &["--experiment", "3", "--method", "bfs-ls", "--max-ndof", "500"]);
    for r in parse_rows(&csv) {
        assert!(r[3..6].iter().all(Option::is_none));
        assert!(r[6].unwrap() > 0.0);
        assert!(r[7].is_none());
    }
}

#[test]
fn invalid_parameters_exit_with_usage_code() {
    let cases: [&[&str]; 4] = [
        &["--experiment", "1", "--method", "bfs-ns", "--lambda", "2"],
        &["--experiment", "2", "--method", "bfs-ls", "--non-matching"],
        &["--experiment", "3", "--method", "th-ls", "--non-matching"],
        &["--experiment", "1", "--method", "bfs-ls", "--theta", "1.5"],
    ];
    for args in cases {
        let res = cli(args);
        assert_eq!(res.status.code(), Some(2), "{args:?}");
    }
    assert_eq!(cli(&["--method", "bfs-ls"]).status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# benchmark\nexperiment = 1\nmethod = bfs-ls\nrefinement = uniform\nmax-ndof = 5000\n").unwrap();
    let from_file = run_to(dir.path(), "f.csv", &["--config", cfg.to_str().unwrap()]);
    let overridden = run_to(dir.path(), "o.csv", &["--config", cfg.to_str().unwrap(), "--max-ndof", "200"]);
    let (nf, no) = (parse_rows(&from_file).len(), parse_rows(&overridden).len());
    assert!(no < nf, "{no} vs {nf}");
    for r in parse_rows(&overridden) {
        assert!(r[1].unwrap() <= 200.0 || r[0] == Some(0.0));
    }
    fs::write(&cfg, "experiment = 1\ncolour = red\n").unwrap();
    assert_eq!(cli(&["--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn plots_and_mesh_dump_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("fig");
    let dump = dir.path().join("mesh.txt");
    run_to(
        dir.path(),
        "p.csv",
        &[
            "--experiment",
            "2",
            "--method",
            "bfs-ls",
            "--max-ndof",
            "400",
            "--plot",
            prefix.to_str().unwrap(),
            "--dump-mesh",
            dump.to_str().unwrap(),
        ],
    );
    for suffix in ["fig_convergence.svg", "fig_mesh.svg"] {
        let svg = fs::read_to_string(dir.path().join(suffix)).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
    let text = fs::read_to_string(dump).unwrap();
    for section in ["VERTICES", "CELLS", "HANGING"] {
        assert!(text.lines().any(|l| l.starts_with(section)), "{section}");
    }

    let tri_dump = dir.path().join("tri.txt");
    run_to(
        dir.path(),
        "t.csv",
        &["--experiment", "1", "--method", "th-ls", "--max-ndof", "300", "--dump-mesh", tri_dump.to_str().unwrap()],
    );
    let text = fs::read_to_string(tri_dump).unwrap();
    assert!(text.lines().any(|l| l.starts_with("TRIANGLES")));
}

#[test]
fn convergence_plot_alone_without_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let written = emit_plots(&[], None, &dir.path().join("x")).unwrap();
    assert_eq!(written.len(), 1);
    assert!(written[0].ends_with("x_convergence.svg"));
}
