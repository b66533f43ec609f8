//! Batch runner for the adaptive solvers: convergence tables, mesh dumps
//! and SVG figures.

pub mod config;
pub mod csv;
pub mod error;
pub mod plot;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cordes_fem::adaptivity::{run_adaptive, AdaptiveConfig, AdaptiveRun, ConvergenceRecord, MeshSnapshot};
use cordes_fem::experiments::problem_spec;

pub use config::{ConfigFile, RunArgs, RunConfig};
pub use csv::emit_csv;
pub use error::CliError;

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

/// Writes `<prefix>_convergence.svg` and, when a mesh is given,
/// `<prefix>_mesh.svg`. Returns the written paths.
pub fn emit_plots(records: &[ConvergenceRecord], mesh: Option<&MeshSnapshot>, prefix: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let conv = with_suffix(prefix, "_convergence.svg");
    write_file(&conv, &plot::convergence_svg(records))?;
    written.push(conv);
    if let Some(m) = mesh {
        let p = with_suffix(prefix, "_mesh.svg");
        write_file(&p, &plot::mesh_svg(m))?;
        written.push(p);
    }
    Ok(written)
}

/// Executes one configured run and writes every requested output. A run that
/// stops early still writes its completed levels before reporting the failure.
pub fn run(config: &RunConfig) -> Result<AdaptiveRun, CliError> {
    let spec = problem_spec(config.experiment, config.matching).map_err(|e| CliError::Usage(e.to_string()))?;
    let adaptive = AdaptiveConfig {
        theta: config.theta,
        marking: config.marking,
        refinement: config.refinement,
        max_ndof: config.max_ndof,
        formulation: config.method.formulation(),
        lambda: config.lambda,
        quad: config.quad,
        ..AdaptiveConfig::default()
    };
    let result = run_adaptive(&spec, config.method.method(), &adaptive)?;
    match &config.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            emit_csv(&result.records, io::BufWriter::new(file)).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
        }
        None => emit_csv(&result.records, io::stdout().lock()).map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })?,
    }
    if let (Some(path), Some(mesh)) = (&config.dump_mesh, result.final_mesh()) {
        write_file(path, &mesh.dump())?;
    }
    if let Some(prefix) = &config.plot {
        emit_plots(&result.records, result.final_mesh(), prefix)?;
    }
    if let Some(source) = result.failure.clone() {
        return Err(CliError::Incomplete {
            levels: result.records.len(),
            source,
        });
    }
    Ok(result)
}
