use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("backward pass requested without a matching forward pass: {0}")]
    MissingForward(&'static str),

    #[error("non-finite value in {context} (parameter {param}, element {index})")]
    NonFinite {
        context: &'static str,
        param: usize,
        index: usize,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("maze generation failed: {0}")]
    Generation(String),

    #[error("layout parse error at line {line}: {message}")]
    LayoutParse { line: usize, message: String },

    #[error("phase isolation violated in {phase}: {groups} changed")]
    Isolation { phase: &'static str, groups: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training aborted at iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
