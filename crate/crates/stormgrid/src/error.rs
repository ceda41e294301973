use thiserror::Error;

/// Errors raised while building or validating a grid model.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("parse error in {file} at row {row}, column {column}: {message}")]
    ParseError {
        file: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("dangling reference to unknown id {0:?}")]
    DanglingReference(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("infeasible integration target {0}; allowed range is [0.05, 0.95]")]
    InfeasibleTarget(f64),
}

/// Errors from the hazard model.
#[derive(Debug, Error)]
pub enum HazardError {
    #[error("track needs at least two fixes")]
    DegenerateTrack,
    #[error("query time {0} outside track span")]
    OutOfRange(String),
}

/// Errors from the vulnerability model.
#[derive(Debug, Error)]
pub enum VulnerabilityError {
    #[error("no fragility curve for component class {0}")]
    MissingCurve(String),
    #[error("unknown component id {0:?}")]
    UnknownComponent(String),
}

/// Errors from the network / power-flow layer.
#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("singular system: {0}")]
    SingularSystem(String),
}

/// Errors from ensemble post-processing.
#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("observed data cannot be aligned with the simulation time grid: {0}")]
    MisalignedTimeGrid(String),
}
