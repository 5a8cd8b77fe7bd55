use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("out of domain: {0}")]
    Domain(String),

    #[error(
        "policy iteration did not converge at time index {time_index} (t = {t}) \
         after {iterations} iterations; residual history {residuals:?}"
    )]
    NoConvergence {
        time_index: usize,
        t: f64,
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("singular linear system at time index {time_index}, row {row}")]
    SingularSystem { time_index: usize, row: usize },

    #[error("unknown {kind} `{name}`")]
    UnknownEntry { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. } | Error::Config { .. } | Error::UnknownEntry { .. }
        )
    }
}
