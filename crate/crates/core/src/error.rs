use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("generator piece {piece} is not a rate matrix: {detail}")]
    NonGenerator { piece: usize, detail: String },

    #[error("bad schedule: {0}")]
    BadSchedule(String),

    #[error("state index {state} out of range for a chain with {n_states} states")]
    BadState { state: usize, n_states: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("contraction condition violated (worst margin {margin:.6e} at t={time}, state {state})")]
    ContractionViolated { margin: f64, time: f64, state: usize },

    #[error("non-finite value at t={time}, state {state}")]
    NonFinite { time: f64, state: usize },

    #[error("non-finite Monte Carlo sample from path seed {seed}")]
    NonFiniteSample { seed: u64 },

    #[error("precondition unmet: {0}")]
    PreconditionUnmet(String),

    #[error("obstacle exceeds the terminal value in state {state} by {gap:.6e}")]
    ObstacleIncompatible { state: usize, gap: f64 },

    #[error("penalization did not converge by n={n} (last sup distance {last_distance:.6e})")]
    NoConvergence { n: u64, last_distance: f64 },

    #[error("implicit step did not converge at t={time}")]
    ImplicitSolve { time: f64 },

    #[error("short rate {rate} at t={time}, state {state} outside [0, {r_max}]")]
    RateBoundViolated { rate: f64, time: f64, state: usize, r_max: f64 },

    #[error("transposed Gamma is not stable (largest eigenvalue real part {max_real_part})")]
    UnstableGamma { max_real_part: f64 },

    #[error("stock {stock} price {price} in state {state} at t={time} is not positive")]
    NonPositivePrices { stock: usize, state: usize, time: f64, price: f64 },

    #[error("stock matrix is singular at t={time} (smallest singular value {singular_value:.3e})")]
    SingularPhi { time: f64, singular_value: f64 },

    #[error("missing inputs in {}: {detail}", dir.display())]
    MissingInputs { dir: PathBuf, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
