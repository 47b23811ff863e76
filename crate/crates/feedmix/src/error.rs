use thiserror::Error;

use crate::model::Solution;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: mix has {mix} entries, scenario has {scenario}")]
    DimensionMismatch { mix: usize, scenario: usize },

    #[error("reservoir saturated: feedstock {index} consumes {consumed} of {reservoir} available water")]
    SaturatedReservoir {
        index: usize,
        consumed: f64,
        reservoir: f64,
    },

    #[error("CES exponent must be positive, got {0}")]
    NonpositiveCesExponent(f64),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("feedstock index {index} out of range for {len} feedstocks")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("infeasible scenario: combined reservoir capacity {capacity} does not exceed demand {demand}")]
    InfeasibleScenario { capacity: f64, demand: f64 },

    #[error("root bracketing failed after {expansions} expansions")]
    RootBracketFailure { expansions: usize },

    #[error("support enumeration refused for N = {n} (limit {limit}); use the general solver")]
    SupportEnumerationOverflow { n: usize, limit: usize },

    #[error("no grid point satisfies the constraints")]
    EmptyGrid,

    #[error("iteration cap hit on every start; best objective found {best_objective}")]
    NonConvergence {
        best: Box<Solution>,
        best_objective: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
