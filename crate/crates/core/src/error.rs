use thiserror::Error;

/// Crate-wide error type. The CLI maps variants onto exit codes: parse and
/// validation failures exit 1, numerical failures exit 2, I/O failures exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid {key}: {msg}")]
    Validation { key: String, msg: String },

    #[error("{stage}: solver did not converge after {iters} iterations (residual {residual:.3e})")]
    SolverDiverged { stage: &'static str, iters: usize, residual: f64 },

    #[error("{stage}: non-finite values at step {step}")]
    NonFinite { stage: &'static str, step: u64 },

    #[error("snapshot {path}: {msg}")]
    Snapshot { path: String, msg: String },

    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } => 1,
            Error::SolverDiverged { .. } | Error::NonFinite { .. } => 2,
            Error::Snapshot { .. } | Error::Io { .. } => 3,
        }
    }

    /// Stable lowercase tag for the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::SolverDiverged { .. } => "solver_diverged",
            Error::NonFinite { .. } => "non_finite",
            Error::Snapshot { .. } => "snapshot",
            Error::Io { .. } => "io",
        }
    }
}
