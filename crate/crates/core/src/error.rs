use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("non-finite {what}")]
    NonFinite { what: &'static str },

    #[error("training diverged at step {step}: {what} is not finite")]
    Divergence { what: &'static str, step: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("seed {seed}, stage {stage}: {source}")]
    Stage {
        seed: u64,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_stage(self, seed: u64, stage: &'static str) -> Error {
        Error::Stage {
            seed,
            stage,
            source: Box::new(self),
        }
    }
}
