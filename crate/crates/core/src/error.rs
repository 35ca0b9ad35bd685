//! Error type shared across the crate.
//!
//! Errors split into two classes mirrored by the CLI exit codes:
//! validation errors (bad inputs, malformed configs — exit 2) and numerical
//! failures (non-convergent projections, root searches that lose their
//! bracket — exit 3).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("comparator wires must satisfy 1 <= top < bottom <= n_wires, got ({top}, {bottom}) on {n_wires} wires")]
    InvalidComparator {
        top: usize,
        bottom: usize,
        n_wires: usize,
    },

    #[error("exhaustive 0-1 verification refused for {n_wires} wires (limit 20); will not silently subsample")]
    WireCountTooLarge { n_wires: usize },

    #[error("network is not a sorting network: binary input {witness:#b} on {n_wires} wires stays unsorted")]
    NotASortingNetwork { n_wires: usize, witness: u64 },

    #[error(
        "refusing to build a reflection sequence from an unverified network ({n_wires} wires)"
    )]
    UnverifiedNetwork { n_wires: usize },

    #[error("invalid canonical point: {0}")]
    InvalidCanonicalPoint(String),

    #[error(
        "constraint coefficient {value} < -1 between comparator {row} = ({row_top},{row_bottom}) \
         and comparator {col} = ({col_top},{col_bottom})"
    )]
    CoefficientBelowMinusOne {
        row: usize,
        row_top: usize,
        row_bottom: usize,
        col: usize,
        col_top: usize,
        col_bottom: usize,
        value: i64,
    },

    #[error("object is not a permutation of the canonical point: {0}")]
    NotAnObject(String),

    #[error("loss vector invalid: {0}")]
    InvalidLoss(String),

    #[error("{what} supports n <= {limit}, got {got}")]
    SizeLimit {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    #[error("constraint {index} ({label}) is infeasible: rhs {rhs} > 0 but all positive-coefficient coordinates carry zero weight")]
    InfeasibleConstraint {
        index: usize,
        label: String,
        rhs: f64,
    },

    #[error("no positive root: {0}")]
    NoPositiveRoot(String),

    #[error("root bracket exhausted in [{lo:e}, {hi:e}] (violated preconditions upstream)")]
    BracketExhausted { lo: f64, hi: f64 },

    #[error("projection did not converge after {cycles} cycles (max residual {max_residual:e} > tol {tol:e}){context}")]
    ProjectionDidNotConverge {
        cycles: usize,
        max_residual: f64,
        tol: f64,
        context: String,
    },

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("{failed} invariant check(s) failed at n = {n}")]
    VerificationFailed { failed: usize, n: usize },

    #[error("loss file row {row}: {reason}")]
    LossFile { row: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code class: 2 for validation errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleConstraint { .. }
            | Error::NoPositiveRoot(_)
            | Error::BracketExhausted { .. }
            | Error::ProjectionDidNotConverge { .. }
            | Error::NotASortingNetwork { .. }
            | Error::VerificationFailed { .. } => 3,
            _ => 2,
        }
    }
}
