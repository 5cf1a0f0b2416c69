use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PvfimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    NumericalFailure { iteration: usize, message: String },

    /// The log-barrier argument `f_J(x) + eps - f(x, y)` is not positive.
    #[error("barrier domain violated: slack = {slack:e}")]
    BarrierDomain { slack: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("schedule invalid: {0}")]
    ScheduleInvalid(String),

    #[error("internal consistency: {0}")]
    Internal(String),

    /// An inner error annotated with the solver loop indices where it happened.
    #[error("at l={l}, t={t}, k={k}: {source}")]
    AtIteration {
        l: usize,
        t: usize,
        k: usize,
        #[source]
        source: Box<PvfimError>,
    },
}

pub type Result<T> = std::result::Result<T, PvfimError>;

impl PvfimError {
    pub(crate) fn at(self, l: usize, t: usize, k: usize) -> Self {
        PvfimError::AtIteration {
            l,
            t,
            k,
            source: Box::new(self),
        }
    }

    /// Re-labels the outer indices of an annotated error, or annotates a bare one.
    pub(crate) fn relocate(self, l: usize, t: usize) -> Self {
        match self {
            PvfimError::AtIteration { k, source, .. } => PvfimError::AtIteration { l, t, k, source },
            other => other.at(l, t, 0),
        }
    }

    /// Strips iteration annotations and returns the underlying error.
    pub fn root(&self) -> &PvfimError {
        match self {
            PvfimError::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by bad inputs rather than numerical trouble.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self.root(),
            PvfimError::InvalidArgument(_)
                | PvfimError::DimensionMismatch { .. }
                | PvfimError::ScheduleInvalid(_)
                | PvfimError::ContractViolation(_)
        )
    }
}
