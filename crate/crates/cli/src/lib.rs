//! Config-driven front end for the `conjpair` solvers.

pub mod commands;
pub mod config;

pub use commands::Outcome;
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] conjpair::Error),
}

impl CliError {
    /// 3 for numerical non-convergence, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(conjpair::Error::NonConvergence { .. }) => 3,
            CliError::Core(conjpair::Error::ColumnSolve { source, .. })
                if matches!(**source, conjpair::Error::NonConvergence { .. }) =>
            {
                3
            }
            _ => 2,
        }
    }
}

/// Sizes the global worker pool from `CONJPAIR_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(s) = std::env::var("CONJPAIR_THREADS") else {
        return Ok(());
    };
    let n: usize = s.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "CONJPAIR_THREADS must be a positive integer, got {s:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}
