use crate::grid::ValueSeries;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("state {state:?} is outside the grid beyond the clamp tolerance")]
    OutOfBounds { state: Vec<f64> },

    #[error("fields are defined on different grids")]
    GridMismatch,

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("enumeration size {size:.3e} exceeds the oracle capacity guard")]
    Capacity { size: f64 },

    #[error("CFL time step {dt:.3e} underflowed; instance is too stiff")]
    Stiffness { dt: f64 },

    #[error("max_steps exceeded after horizon {reached}; partial series attached")]
    Truncated { reached: f64, partial: ValueSeries },

    #[error("trajectory diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("value iteration did not converge before max_T; history attached")]
    NonConvergence { history: Vec<(f64, f64)> },

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
