use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: usize },

    #[error("line {line}: {what} index {value} out of range (limit {limit})")]
    OutOfBounds {
        line: usize,
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("pruning removed every node")]
    DegeneratePruning,

    #[error("only {kept} nodes survive pruning, fewer than K = {k}")]
    TooFewKept { kept: usize, k: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("edge probability {value} exceeds 1 at layer {layer}, block ({a}, {b})")]
    Probability {
        layer: usize,
        a: usize,
        b: usize,
        value: f64,
    },

    #[error("community {0} is empty")]
    EmptyCommunity(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (max asymmetry {0})")]
    NotSymmetric(f64),

    #[error("every embedding row is zero")]
    DegenerateEmbedding,

    #[error("k-means needs at least K = {k} points, got {m}")]
    TooFewPoints { m: usize, k: usize },

    #[error("non-finite coordinate in k-means input")]
    NonFinite,

    #[error("exact k-means enumeration is limited to 14 points, got {0}")]
    TooManyPoints(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("maximum expected degree is zero")]
    ZeroDegree,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag, used in result tables.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::SelfLoop { .. } => "self-loop",
            Error::OutOfBounds { .. } => "out-of-bounds",
            Error::DegeneratePruning => "degenerate-pruning",
            Error::TooFewKept { .. } => "too-few-kept",
            Error::Parameter(_) => "parameter",
            Error::Probability { .. } => "probability",
            Error::EmptyCommunity(_) => "empty-community",
            Error::Dimension(_) => "dimension",
            Error::NotSymmetric(_) => "not-symmetric",
            Error::DegenerateEmbedding => "degenerate-embedding",
            Error::TooFewPoints { .. } => "too-few-points",
            Error::NonFinite => "non-finite",
            Error::TooManyPoints(_) => "too-many-points",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::ZeroDegree => "zero-degree",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
