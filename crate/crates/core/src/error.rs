use thiserror::Error;

use crate::sdp::VarId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("subsystem {subsystem}: {reason}")]
    InvalidSubsystem { subsystem: usize, reason: String },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: String,
        found: String,
    },

    #[error("subsystem {j} is not a neighbor of subsystem {i}")]
    NotNeighbor { i: usize, j: usize },

    #[error("variable {0:?} is not assigned")]
    MissingVariable(VarId),

    #[error("variable {0:?} is not declared in this problem")]
    UndeclaredVariable(VarId),

    #[error("matrix expression is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("quadratic objective is not convex (smallest eigenvalue {min_eig:e})")]
    NonConvexObjective { min_eig: f64 },

    #[error("constraint row {row} of subsystem {subsystem} has bound {bound} <= 0, not allowed for the quadratic row form")]
    NonPositiveBound {
        subsystem: usize,
        row: usize,
        bound: f64,
    },

    #[error("offline synthesis is infeasible")]
    SynthesisInfeasible,

    #[error("terminal ingredients failed the Lyapunov decrease check (max eigenvalue {max_eig:e})")]
    LyapunovCheckFailed { max_eig: f64 },

    #[error("matrix for subsystem {subsystem} is ill-conditioned (condition number {cond:e})")]
    IllConditioned { subsystem: usize, cond: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("expected an optimal solve result, got {0}")]
    NotOptimal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
