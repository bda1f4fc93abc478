use thiserror::Error;

/// Errors raised by the analysis, simulation and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FjupError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside the effective domain (boundary at {boundary})")]
    Domain { boundary: f64 },

    #[error("support bound too small: truncated mass exceeds tolerance, need T >= {required}")]
    GridTooSmall { required: f64 },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("operation not supported for this service model: {0}")]
    Unsupported(String),

    #[error("too many paths: {n} exceeds the limit of {max}")]
    TooManyPaths { n: usize, max: usize },

    #[error("search space of {size} candidates exceeds the cap of {cap}; use the proportional heuristic instead")]
    SearchSpaceExceeded { size: u128, cap: u128 },

    #[error("allocation {chunks:?} is not an (N,{r})-allocation: subset {subset:?} sums to {sum} < {total}")]
    NotNrMember {
        chunks: Vec<u32>,
        r: usize,
        subset: Vec<usize>,
        sum: u64,
        total: u64,
    },

    #[error("path {path} is unstable under the given allocation")]
    Unstable { path: usize },

    #[error("system overloaded: every allocation has an unstable path")]
    Overloaded,

    #[error("no sign change in bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("no all-positive allocation exists for K={total} over N={paths} paths")]
    NoPositiveAllocation { total: u64, paths: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, FjupError>;
