use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scatterers {i} and {j} overlap: center distance {distance} <= 2")]
    Overlap { i: usize, j: usize, distance: f64 },

    #[error("a table needs at least 2 scatterers, got {0}")]
    TooFewScatterers(usize),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("grazing collision (angle margin {margin:e})")]
    Grazing { margin: f64 },

    #[error("ray misses target scatterer")]
    Miss,

    #[error("Jacobian unbounded: |alpha| = {alpha} is within the grazing tolerance of pi/2")]
    UnboundedJacobian { alpha: f64 },

    #[error("index out of domain: {0}")]
    Domain(String),

    #[error("invalid symbol sequence: {0}")]
    InvalidSequence(String),

    #[error(
        "Newton iteration did not converge after {iterations} steps (|grad L| = {residual:e})"
    )]
    NoOrbit { iterations: usize, residual: f64 },

    #[error("inadmissible orbit: {0}")]
    Inadmissible(String),

    #[error("degenerate orbit: |D| = {d:e} is below 1e-8 of its largest term {scale:e}")]
    DegenerateOrbit { d: f64, scale: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid continuation config: {0}")]
    InvalidConfig(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("scene parse error at line {line}, column {column}: {message}")]
    SceneParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
