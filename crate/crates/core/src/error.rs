use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("node {node} out of range 1..={n}")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("graph is not symmetric: edge ({from}, {to}) has no reverse")]
    Asymmetric { from: usize, to: usize },

    #[error("expected a {expected} tree, got a {found} tree")]
    WrongOrientation {
        expected: &'static str,
        found: &'static str,
    },

    #[error("expected a {expected} matrix, got {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("push-sum weight at agent {agent} is not positive ({value})")]
    NonPositiveWeight { agent: usize, value: f64 },

    #[error("fixed-point check failed: {0}")]
    FixedPoint(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
