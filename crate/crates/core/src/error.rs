use alloc::string::String;

/// Errors produced by the analysis core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("vector norm is below 1e-12")]
    ZeroVector,
    #[error("dimension {dim} exceeds the configured maximum {max}")]
    TooLarge { dim: usize, max: usize },
    #[error("matrix is not symmetric: max |M[i,j] - M[j,i]| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("label {label} is out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("unsupported architecture: {0}")]
    UnsupportedArchitecture(String),
    #[error("input dimension must be {expected}, got {got}")]
    WrongDim { expected: usize, got: usize },
    #[error("class {class} would receive no training samples")]
    ClassTooSmall { class: usize },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("auxiliary training reached only {accuracy:.4} accuracy after {epochs} epochs")]
    AuxTrainingFailed { epochs: usize, accuracy: f64 },
    #[error(
        "boundary search made no progress: |A1| stayed at {start_alignment:.6} after {iterations} iterations"
    )]
    NoProgress {
        start_alignment: f64,
        iterations: usize,
    },
    #[error("eigensolver did not converge")]
    NoConvergence,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
