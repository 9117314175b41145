use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("Riesz condition violated: c1*T = {c1_t} is not below the droplet radius {radius}")]
    RieszViolation { c1_t: f64, radius: f64 },

    #[error("CFL condition violated: c*dt/h = {courant} exceeds {limit}")]
    CflViolation { courant: f64, limit: f64 },

    #[error("source support reaches the absorbing padding ({0})")]
    SourceTouchesPadding(String),

    #[error("point {0:?} lies outside the grid")]
    OutsideGrid([f64; 3]),

    #[error("nonpositive wave speed {value} at node {node}")]
    NonPositiveSpeed { node: usize, value: f64 },

    #[error("probe coincides with the droplet center (zero travel time)")]
    ZeroTravelTime,

    #[error("operator coefficient alpha is zero")]
    ZeroAlpha,

    #[error("vanishing pivot alpha + dt/2*K(0) = {0}")]
    VanishingPivot(f64),

    #[error("field too small for the stencil: {0}")]
    StencilTooSmall(String),

    #[error("remainder kernel does not cover the window: {0}")]
    KernelWindow(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("scenario validation failed:\n{}", .0.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<ValidationIssue>),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One violated scenario constraint, keyed by the offending config entry.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationIssue {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
