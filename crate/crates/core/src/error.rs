use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("density must be finite and nonnegative, got {0}")]
    NegativeDensity(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("node positions are not strictly increasing at node {index}")]
    Unordered { index: usize },

    #[error("profile integral must be positive, got {0}")]
    ZeroIntegral(f64),

    #[error("vacuum encountered at x = {x}")]
    Vacuum { x: f64 },

    #[error("cell {cell} inverted at t = {time} after {retries} step halvings")]
    CellInversion { cell: usize, time: f64, retries: u32 },

    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },

    #[error("goursat march unstable at level {level}: {detail}; refine the u-grid")]
    MarchUnstable { level: usize, detail: String },

    #[error("window [{lo}, {hi}] leaves the fluid domain at t = {time}")]
    WindowOutside { lo: f64, hi: f64, time: f64 },

    #[error("time axes differ: {0}")]
    TimeAxisMismatch(String),

    #[error("configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
