use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("MUE {mue} cannot meet its rate on sub-channel {channel} even without interference")]
    InfeasibleChannel { mue: usize, channel: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("instance too large for exhaustive search: {0}")]
    SizeLimit(String),

    #[error("no valid bisection bracket: {0}")]
    BracketFailure(String),

    #[error("time-sharing factor is zero while the actual power is {power}")]
    InvalidPerspective { power: f64 },

    #[error("solver failed to converge (residual {residual:.3e}): {reason}")]
    SolverFailure { residual: f64, reason: String },

    #[error("ellipsoid became degenerate (condition number {condition:.3e})")]
    DegenerateEllipsoid { condition: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}
