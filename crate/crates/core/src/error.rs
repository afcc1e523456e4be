use thiserror::Error;

use crate::nehari::KIndex;
use crate::optimizer::{Solution, SolveReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected} values, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("field belongs to a different mesh")]
    MeshMismatch,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("wrong sign: {0}")]
    Sign(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no sign change of the fibering map after {doublings} doublings from t = {start:e}")]
    NoRoot { start: f64, doublings: usize },

    #[error("vanishing constraint pairing {pairing:e}; the iterate left the admissible region")]
    DegenerateConstraint { pairing: f64 },

    #[error("sign part annihilated by clipping")]
    LostSign,

    #[error("line search stagnated after {iterations} iterations")]
    Stagnation {
        iterations: usize,
        report: Box<SolveReport>,
    },

    #[error("{} of the three solves failed", failures.len())]
    Partial {
        failures: Vec<(KIndex, String)>,
        solutions: Vec<Solution>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
