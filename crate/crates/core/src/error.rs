use thiserror::Error;

/// Errors raised by the laboratory.
///
/// The variants fall in three families that the runner maps onto exit codes:
/// structural/argument errors, capability violations, and numerical rejections.
#[derive(Debug, Error)]
pub enum CeaError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("axis {axis} out of range for a grid with {dims} axes")]
    AxisOutOfRange { axis: usize, dims: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capability error: `{op}` is not available on model `{model}`")]
    Capability { op: &'static str, model: String },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("degenerate plane: wedge norm {wedge:.3e} below threshold {threshold:.3e}")]
    DegeneratePlane { wedge: f64, threshold: f64 },

    #[error("blowup domain: {0}")]
    BlowupDomain(String),

    #[error("not in the quantomorphism subalgebra: defect {0:.3e}")]
    NotInSubalgebra(f64),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CeaError {
    /// True for capability-flag violations.
    pub fn is_capability(&self) -> bool {
        matches!(self, CeaError::Capability { .. })
    }

    /// True for rejections driven by the numerics (resolution, blowup, degeneracy).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CeaError::Resolution(_)
                | CeaError::DegeneratePlane { .. }
                | CeaError::BlowupDomain(_)
                | CeaError::NotInSubalgebra(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, CeaError>;
