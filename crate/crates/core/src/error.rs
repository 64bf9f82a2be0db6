use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not Hermitian (max |A - A^H| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("density matrix trace is {trace}, expected 1")]
    NotUnitTrace { trace: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("indices must be pairwise distinct, got {0:?}")]
    RepeatedIndex(Vec<usize>),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("levels {j} and {k} are coupled but have degenerate mean energies")]
    DegenerateEnergies { j: usize, k: usize },

    #[error("perturbation has non-zero diagonal element at {index} ({value:.3e})")]
    DiagonalPerturbation { index: usize, value: f64 },

    #[error("spectrum is degenerate within {gap:.3e}; eigenprojection is ill-defined")]
    DegenerateSpectrum { gap: f64 },

    #[error("step size collapsed to {step:.3e} at t = {time}")]
    StepSizeCollapse { time: f64, step: f64 },

    #[error("integration exceeded {0} steps")]
    TooManySteps(usize),

    #[error("Neumann series does not converge (spectral radius estimate {radius:.3})")]
    NeumannDivergent { radius: f64 },

    #[error("matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("dense superoperator path is limited to d <= {max}, got {dim}")]
    TooLarge { dim: usize, max: usize },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepSizeCollapse { .. }
                | Error::TooManySteps(_)
                | Error::NeumannDivergent { .. }
                | Error::IllConditioned { .. }
        )
    }
}
