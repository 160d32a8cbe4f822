use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// A trajectory left the finite range or exceeded the blow-up threshold.
    #[error("blow-up at step {step}{}: state {state:?}", path.map(|p| format!(" on path {p}")).unwrap_or_default())]
    BlowUp {
        step: usize,
        path: Option<u64>,
        state: [f64; 4],
    },

    #[error("undefined sensitivity index: {0}")]
    UndefinedIndex(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attaches a path index to a blow-up raised inside an ensemble.
    pub(crate) fn on_path(self, k: u64) -> Self {
        match self {
            Error::BlowUp { step, state, .. } => Error::BlowUp {
                step,
                path: Some(k),
                state,
            },
            other => other,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::BlowUp { .. } | Error::NumericFailure(_))
    }
}
