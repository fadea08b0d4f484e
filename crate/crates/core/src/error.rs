use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite parameters")]
    NonFinite,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("expected {expected} pairs, found {found}")]
    PairCount { expected: usize, found: usize },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate tangent flow at step {step}")]
    DegenerateTangentFlow { step: usize },

    #[error("trajectory diverged after {usable} usable steps (need at least {required})")]
    TooShort {
        usable: usize,
        required: usize,
        partial: Option<Box<crate::lyapunov::LyapunovReport>>,
    },

    #[error("initialization is not in the permutation-invariant plane (d+ = {0})")]
    NotInPlusPlane(f64),

    #[error("degenerate design: {0}")]
    Degenerate(String),

    #[error("no boundary sampled: every uncertainty fraction is zero")]
    NoBoundarySampled,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
