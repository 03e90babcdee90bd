use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("degenerate position ({x}, {y}): both Cartesian coordinates must be nonzero")]
    DegeneratePosition { x: f64, y: f64 },

    #[error("unobservable configuration: FIM is singular (condition number {cond:.3e})")]
    Singular { cond: f64 },

    #[error("infeasible problem: {reason}")]
    Infeasible { reason: String },

    #[error("rate threshold {required:.4} bit/s/Hz exceeds the maximum achievable rate {max_rate:.4} bit/s/Hz")]
    RateUnreachable { required: f64, max_rate: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("finite-difference step failure: {0}")]
    StepFailure(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
