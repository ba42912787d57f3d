use thiserror::Error;

/// Errors surfaced by state, channel, protocol and tomography operations.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("duplicate target qubits in {0:?}")]
    DuplicateTargets(Vec<u8>),

    #[error("qubit {0} is not in the register")]
    UnknownQubit(u8),

    #[error("operator arity {arity} does not match {targets} target qubits")]
    ArityMismatch { arity: usize, targets: usize },

    #[error("keep set must be a nonempty subset of the register")]
    EmptyKeepSet,

    #[error("requested measurement branch has zero probability ({prob:.3e})")]
    ZeroProbabilityBranch { prob: f64 },

    #[error("unknown basis token '{0}' (expected Z, X or Y)")]
    UnknownBasis(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("correction table verification failed for branch (i={i}, j={j})")]
    CorrectionVerification { i: u8, j: char },

    #[error("calibration did not reach the isolation threshold within {evaluations} evaluations (best worst-case isolation {best:.1})")]
    CalibrationBudgetExhausted { evaluations: usize, best: f64 },

    #[error("invalid mode token '{0}' (expected post_selected or corrected)")]
    InvalidMode(String),

    #[error("protocol order violation: expected {expected}, got {got}")]
    ProtocolOrder { expected: String, got: String },

    #[error("tomography setting {0} has no counts")]
    EmptySetting(String),

    #[error("noise targets are infeasible: {0}")]
    InfeasibleTargets(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
