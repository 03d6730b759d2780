use thiserror::Error;

/// Every failure the toolkit reports. Variants map onto the exit-code classes
/// of the command-line front end via [`Error::class`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("degenerate one-form at {point:?}: tangential norm {norm:e}")]
    DegenerateForm { point: Vec<f64>, norm: f64 },

    #[error("field is not tangent to the plane field (residual {residual:e} at {point:?})")]
    NotTangent { point: Vec<f64>, residual: f64 },

    #[error("integrator step size underflow at t = {t}")]
    StepFailure { t: f64 },

    #[error("invalid link: {0}")]
    InvalidLink(String),

    #[error("Jacobian has a two-dimensional null space at {point:?}")]
    SingularJacobian { point: Vec<f64> },

    #[error("continuation failed: {0}")]
    Continuation(String),

    #[error("linking integral not resolved: value {value} (residual {residual})")]
    RefineNeeded { value: f64, residual: f64 },

    #[error("curves intersect or nearly do (distance {distance:e})")]
    CurvesIntersect { distance: f64 },

    #[error("no heteroclinic connection: {0}")]
    NoConnection(String),

    #[error("field vanishes at {} surface node(s)", nodes.len())]
    VanishingField { nodes: Vec<(usize, usize)> },

    #[error("loop passes a singular point of the line field at sample {index}")]
    SingularOnLoop { index: usize },

    #[error("invalid round-handle decomposition: {}", violations.join("; "))]
    InvalidRhd { violations: Vec<String> },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Coarse grouping used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. }
            | Error::NotTangent { .. }
            | Error::InvalidLink(_)
            | Error::InvalidRhd { .. }
            | Error::UnknownPreset(_)
            | Error::BadParams(_)
            | Error::Invalid(_)
            | Error::VanishingField { .. }
            | Error::SingularOnLoop { .. }
            | Error::CurvesIntersect { .. } => ErrorClass::Validation,
            Error::DegenerateForm { .. }
            | Error::StepFailure { .. }
            | Error::SingularJacobian { .. }
            | Error::Continuation(_)
            | Error::RefineNeeded { .. }
            | Error::NoConnection(_) => ErrorClass::Numerical,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "Parse",
            Error::DegenerateForm { .. } => "DegenerateForm",
            Error::NotTangent { .. } => "NotTangent",
            Error::StepFailure { .. } => "StepFailure",
            Error::InvalidLink(_) => "InvalidLink",
            Error::SingularJacobian { .. } => "SingularJacobian",
            Error::Continuation(_) => "Continuation",
            Error::RefineNeeded { .. } => "RefineNeeded",
            Error::CurvesIntersect { .. } => "CurvesIntersect",
            Error::NoConnection(_) => "NoConnection",
            Error::VanishingField { .. } => "VanishingField",
            Error::SingularOnLoop { .. } => "SingularOnLoop",
            Error::InvalidRhd { .. } => "InvalidRHD",
            Error::UnknownPreset(_) => "UnknownPreset",
            Error::BadParams(_) => "BadParams",
            Error::Invalid(_) => "Invalid",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
