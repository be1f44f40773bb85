use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum GlbError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degree error: {0}")]
    Degree(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    Solver { residual: f64, iterations: usize },

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GlbError>;
