use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid feeder: {0}")]
    InvalidFeeder(String),

    #[error("feeder config {field}: {message}")]
    FeederConfig { field: String, message: String },

    #[error("scenario config {field}: {message}")]
    ScenarioConfig { field: String, message: String },

    #[error("power flow did not converge after {iterations} iterations (max dV {max_delta:.3e} p.u.)")]
    PowerFlowDiverged { iterations: usize, max_delta: f64 },

    #[error("power flow failed at minute {minute}: {source}")]
    MinuteFailed {
        minute: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dispatch infeasible: {0}")]
    Infeasible(String),

    #[error("solver limit: {0}")]
    SolverLimit(String),

    #[error("lp solver: {0}")]
    Lp(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorClass {
    Config,
    Io,
    SolverLimit,
    Other,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidFeeder(_)
            | Error::FeederConfig { .. }
            | Error::ScenarioConfig { .. }
            | Error::InvalidInput(_) => ErrorClass::Config,
            Error::Io { .. } | Error::Csv(_) | Error::Parse { .. } => ErrorClass::Io,
            Error::SolverLimit(_) => ErrorClass::SolverLimit,
            Error::MinuteFailed { source, .. } => source.class(),
            _ => ErrorClass::Other,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::FeederConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes() {
        assert_eq!(Error::config("x", "y").class(), ErrorClass::Config);
        assert_eq!(Error::InvalidInput("x".into()).class(), ErrorClass::Config);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(Error::io("f", io).class(), ErrorClass::Io);
        assert_eq!(Error::SolverLimit("t".into()).class(), ErrorClass::SolverLimit);
        assert_eq!(Error::Infeasible("t".into()).class(), ErrorClass::Other);
    }
}
