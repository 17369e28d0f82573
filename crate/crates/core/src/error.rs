use thiserror::Error;

use crate::linalg::C64;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{lambda} is not a characteristic root (sigma_min/scale = {ratio:.3e})")]
    NotARoot { lambda: C64, ratio: f64 },
    #[error("ambiguous rank decision: {0}")]
    AmbiguousRank(String),
    #[error("Jordan chain construction failed: {0}")]
    Chain(String),
    #[error("bilinear form is singular (condition {condition:.3e}); basis pairing is defective")]
    SingularForm { condition: f64 },
    #[error("invalid spectral basis: {0}")]
    InvalidBasis(String),
    #[error("range(T) + image of E does not span the matrix space: {0}")]
    SpanFailure(String),
    #[error("delay selection failed: {0}")]
    DelaySelection(String),
    #[error("residual {residual:.3e} exceeds {limit:.1e} in {context}")]
    Residual { context: String, residual: f64, limit: f64 },
    #[error("scalar simplification needs n = 1, got n = {0}")]
    NotScalar(usize),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("conjugation structure: {0}")]
    Conjugation(String),
    #[error("Newton iteration failed: {0}")]
    Newton(String),
    #[error("frequencies are resonant: |{p}*w1 - {q}*w2| = {gap:.3e}")]
    Resonance { p: i32, q: i32, gap: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
