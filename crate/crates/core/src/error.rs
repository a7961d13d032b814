use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Non-finite coordinates produced by a flow evaluation.
    #[error("flow diverged at q={q:?}, p={p:?}")]
    FlowDivergence { q: Vec<f64>, p: Vec<f64> },

    /// Density mass or likelihood quotient outside the support of the target.
    #[error("domain error: {0}")]
    Domain(String),

    /// Incompatible arguments (grid mismatch, dimension mismatch, bad parameters).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid exponent q={0}: conjugate exponents require q > 1")]
    Exponent(f64),

    #[error("size guard: {nodes} grid nodes exceeds the dense limit of {limit}")]
    SizeGuard { nodes: usize, limit: usize },

    /// Iterative solver stopped without reaching its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            message: message.into(),
        }
    }
}
