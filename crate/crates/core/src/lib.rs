//! Backward stochastic differential equations driven by the martingale of a
//! finite-state continuous-time Markov chain, with and without reflection at
//! an obstacle, and American-option superhedging in the Markov-chain market
//! with a stochastic discount function.
//!
//! The chain `X` takes values in the unit vectors `e_0 … e_{N-1}` and has the
//! semimartingale form `dX = A X dt + dM`, so generators are stored in the
//! *column* convention: `A[(i, j)]` is the jump rate from state `j` to state
//! `i` and every column sums to zero.
//!
//! Markovian drivers and terminal values are functions of `(t, state)`, which
//! lets every equation be reduced exactly to a backward ODE system on
//! `y(t) ∈ ℝ^N` with `Y_t = y(t)'X_t` and `Z_t = y(t)`.
//!
//! Module map:
//!
//! - [`chain`]: chain specification, exact simulation, martingale paths, the
//!   `Ψ` matrix and its seminorm, the contraction check.
//! - [`linalg`]: Moore–Penrose pseudoinverse of symmetric matrices.
//! - [`bsde`]: drivers, the backward ODE solver, pathwise residuals and the
//!   comparison check.
//! - [`rbsde`]: reflected scheme, penalization, Snell-envelope oracle,
//!   Skorokhod check and optimal stopping.
//! - [`market`]: stochastic discount function, short rate, stock curves.
//! - [`hedge`]: American pricing, hedge extraction and forward replication.
//! - [`mc`]: Monte Carlo estimation and statistical checks.
//! - [`export`]: CSV writers and readers for every result table.
//! - [`config`], [`run`]: declarative run configuration and the job runner
//!   behind the `rbsde` binary.

pub mod bsde;
pub mod chain;
pub mod config;
pub mod export;
pub mod error;
pub mod grid;
pub mod hedge;
pub mod linalg;
pub mod market;
pub mod mc;
pub mod rbsde;
pub mod run;
pub mod schedule;

pub use error::{Error, Result};
pub use grid::{StateGridFunction, TimeGrid};

pub use nalgebra::{DMatrix, DVector};
