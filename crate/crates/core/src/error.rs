use thiserror::Error;

use crate::sdp::SolveStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("shaping matrix B[{i}][{j}] is singular or not Hermitian positive definite")]
    SingularShaping { i: usize, j: usize },

    #[error("decoder for user {k} is rank deficient")]
    DecoderRank { k: usize },

    #[error("total consumed power is zero (all precoders zero and no circuit power)")]
    DegeneratePower,

    #[error("fractional model returned non-positive denominator {0}")]
    NonPositiveDenominator(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("SDP solver finished with status {status:?} while {context}")]
    Solver {
        context: String,
        status: SolveStatus,
    },

    #[error("invalid experiment specification: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
