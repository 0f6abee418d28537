use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative value in {0}")]
    Negative(&'static str),
    #[error("measure not resolved: radius {radius} is below the cell width {width}")]
    UnresolvedMeasure { radius: f64, width: f64 },
    #[error("annulus not resolved: inner radius {inner} is below two cell widths ({width})")]
    UnresolvedAnnulus { inner: f64, width: f64 },
    #[error("empty region")]
    EmptyRegion,
    #[error("zero total mass in {0}")]
    ZeroMass(&'static str),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("parameter `{param}` violates a constraint: {detail}")]
    Constraint { param: &'static str, detail: String },
    #[error("resource guard: {0}")]
    ResourceGuard(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn constraint(param: &'static str, detail: impl Into<String>) -> LabError {
    LabError::Constraint {
        param,
        detail: detail.into(),
    }
}
