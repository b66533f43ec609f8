use std::path::PathBuf;

use cordes_fem::FemError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid flags, config values or flag combinations.
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Solver(#[from] FemError),

    /// The run stopped early; outputs hold the levels completed before `source`.
    #[error("run stopped after {levels} level(s): {source}")]
    Incomplete { levels: usize, source: FemError },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
