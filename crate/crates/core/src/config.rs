//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//!
//! [chain]
//! n_states = 2
//! initial_state = 0
//! horizon = 1.0
//! [[chain.generator]]
//! start = 0.0
//! matrix = [[-1.0, 1.0], [1.0, -1.0]]   # columns sum to zero
//!
//! [market]                               # optional
//! dividends = [[1.0, 0.5], [0.5, 1.0]]   # one vector per stock
//! [[market.c]]
//! start = 0.0
//! matrix = [[0.0, 0.0], [0.0, 0.0]]
//! [[market.d]]
//! start = 0.0
//! vector = [0.05, 0.05]
//!
//! [driver]
//! kind = "hedge"            # zero | constant | discount | affine_in_state | hedge
//!
//! [payoff]
//! kind = "put"              # zero | constant | affine_in_state | put
//! stock = 0
//! strike = 20.0
//!
//! [solver]
//! steps = 1000
//! ```
//!
//! Matrices are written row by row.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bsde::{AffineInStateDriver, DiscountDriver, FnDriver, MarkovDriver, Scheme, SolveOptions, ZeroDriver};
use crate::chain::{build_chain_spec, ChainSpec};
use crate::hedge::{HedgeDriver, Payoff};
use crate::market::{MarketSpec, StockCurves, DEFAULT_EXTENSION_FACTOR, DEFAULT_R_MAX};
use crate::rbsde::Obstacle;
use crate::{Error, Result, StateGridFunction, TimeGrid};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub chain: ChainConfig,
    #[serde(default)]
    pub market: Option<MarketConfig>,
    #[serde(default)]
    pub driver: DriverConfig,
    /// Terminal vector `ξ` for `solve-bsde` and `solve-rbsde`.
    #[serde(default)]
    pub terminal: Option<Vec<f64>>,
    /// Obstacle for `solve-rbsde`.
    #[serde(default)]
    pub obstacle: Option<GridFnConfig>,
    /// Exercise value for `price-american`, `hedge` and `verify`.
    #[serde(default)]
    pub payoff: Option<GridFnConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n_states: usize,
    pub initial_state: usize,
    pub horizon: f64,
    pub generator: Vec<MatrixPiece>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixPiece {
    pub start: f64,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorPiece {
    pub start: f64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub c: Vec<MatrixPiece>,
    pub d: Vec<VectorPiece>,
    pub dividends: Vec<Vec<f64>>,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    /// Defaults to `10 T`.
    #[serde(default)]
    pub horizon_extension: Option<f64>,
}

fn default_r_max() -> f64 {
    DEFAULT_R_MAX
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Discount {
        rate: f64,
    },
    /// `f = slope_i y + offset_i`.
    AffineInState {
        slope: Vec<f64>,
        offset: Vec<f64>,
    },
    /// The superhedging driver of the market section.
    Hedge,
}

/// A function of `(t, state)` used as obstacle or payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridFnConfig {
    Zero,
    Constant { value: f64 },
    /// `g_i(t) = base_i + slope_i t`.
    AffineInState { base: Vec<f64>, slope: Vec<f64> },
    /// `max(strike − S^stock_t, 0)`.
    Put { stock: usize, strike: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub steps: usize,
    pub scheme: Scheme,
    pub strict_contraction: bool,
    /// Run the penalization sequence in `solve-rbsde`.
    pub penalization: bool,
    pub penalization_tol: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Paths written by `simulate`.
    pub simulate_paths: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            scheme: Scheme::ExplicitRk4,
            strict_contraction: false,
            penalization: true,
            penalization_tol: 1e-3,
            n_paths: 10_000,
            seed: 42,
            simulate_paths: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Constant integrand of the isometry check; `e_0` when absent.
    pub isometry_z: Option<Vec<f64>>,
    /// European claim; the payoff's terminal value (or ones) when absent.
    pub european_claim: Option<Vec<f64>>,
    /// Paths for the forward replication and SDE residual checks.
    pub replication_paths: usize,
    /// Bound on the SDE residuals of the discount factor and stock prices.
    pub residual_tol: f64,
    /// Bound on the forward replication gap.
    pub replication_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { isometry_z: None, european_claim: None, replication_paths: 100, residual_tol: 1e-6, replication_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(Error::DimensionMismatch(format!("{what} must have {n} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn n_states(&self) -> usize {
        self.chain.n_states
    }

    pub fn chain_spec(&self) -> Result<ChainSpec> {
        let n = self.chain.n_states;
        let schedule = self
            .chain
            .generator
            .iter()
            .map(|p| Ok((p.start, matrix(&p.matrix, n, "generator")?)))
            .collect::<Result<Vec<_>>>()?;
        build_chain_spec(n, schedule, self.chain.initial_state, self.chain.horizon)
    }

    pub fn market_spec(&self) -> Result<Option<MarketSpec>> {
        let Some(m) = &self.market else { return Ok(None) };
        let n = self.chain.n_states;
        let c = m.c.iter().map(|p| Ok((p.start, matrix(&p.matrix, n, "C")?))).collect::<Result<Vec<_>>>()?;
        let d = m.d.iter().map(|p| Ok((p.start, vector(&p.vector, n, "D")?))).collect::<Result<Vec<_>>>()?;
        let dividends = m.dividends.iter().map(|v| vector(v, n, "dividend")).collect::<Result<Vec<_>>>()?;
        MarketSpec::new(self.chain_spec()?, c, d, dividends, m.r_max).map(Some)
    }

    pub fn horizon_extension(&self) -> f64 {
        self.market
            .as_ref()
            .and_then(|m| m.horizon_extension)
            .unwrap_or(DEFAULT_EXTENSION_FACTOR * self.chain.horizon)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { steps: self.solver.steps, scheme: self.solver.scheme, strict_contraction: self.solver.strict_contraction }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.chain.horizon, self.solver.steps)
    }

    pub fn driver(&self, market: Option<&MarketSpec>) -> Result<Box<dyn MarkovDriver>> {
        let n = self.chain.n_states;
        Ok(match &self.driver {
            DriverConfig::Zero => Box::new(ZeroDriver),
            DriverConfig::Constant { value } => {
                let value = *value;
                Box::new(FnDriver::new(0.0, 0.0, move |_, _, _, _: &DVector<f64>| value))
            }
            DriverConfig::Discount { rate } => Box::new(DiscountDriver { rate: *rate }),
            DriverConfig::AffineInState { slope, offset } => Box::new(AffineInStateDriver {
                slope: vector(slope, n, "driver slope")?,
                offset: vector(offset, n, "driver offset")?,
            }),
            DriverConfig::Hedge => {
                let market = market.ok_or_else(|| Error::Config("driver kind \"hedge\" needs a [market] section".into()))?;
                Box::new(HedgeDriver::new(market))
            }
        })
    }

    pub fn terminal(&self) -> Result<Option<DVector<f64>>> {
        self.terminal.as_ref().map(|t| vector(t, self.chain.n_states, "terminal")).transpose()
    }

    fn sample(&self, spec: &GridFnConfig, grid: TimeGrid, curves: Option<&StockCurves>) -> Result<StateGridFunction> {
        let n = self.chain.n_states;
        Ok(match spec {
            GridFnConfig::Zero => StateGridFunction::zeros(grid, n),
            GridFnConfig::Constant { value } => StateGridFunction::from_fn(grid, n, |_, _| *value),
            GridFnConfig::AffineInState { base, slope } => {
                let base = vector(base, n, "base")?;
                let slope = vector(slope, n, "slope")?;
                StateGridFunction::from_fn(grid, n, |t, i| base[i] + slope[i] * t)
            }
            GridFnConfig::Put { stock, strike } => {
                let curves = curves.ok_or_else(|| Error::Config("a put needs a [market] section".into()))?;
                Payoff::put(curves, *stock, *strike)?.g
            }
        })
    }

    pub fn obstacle(&self, grid: TimeGrid, curves: Option<&StockCurves>) -> Result<Option<Obstacle>> {
        self.obstacle.as_ref().map(|o| Obstacle::new(self.sample(o, grid, curves)?)).transpose()
    }

    pub fn payoff(&self, grid: TimeGrid, curves: Option<&StockCurves>) -> Result<Option<Payoff>> {
        self.payoff.as_ref().map(|p| Payoff::new(self.sample(p, grid, curves)?)).transpose()
    }

    /// Cross-field checks that need no solving.
    pub fn validate(&self) -> Result<()> {
        let n = self.chain.n_states;
        self.chain_spec()?;
        let market = self.market_spec()?;
        self.driver(market.as_ref())?;
        self.terminal()?;
        self.grid()?;
        for spec in [&self.obstacle, &self.payoff].into_iter().flatten() {
            match spec {
                GridFnConfig::AffineInState { base, slope } => {
                    vector(base, n, "base")?;
                    vector(slope, n, "slope")?;
                }
                GridFnConfig::Put { stock, .. } => {
                    let m = market.as_ref().ok_or_else(|| Error::Config("a put needs a [market] section".into()))?;
                    if *stock >= m.n_stocks() {
                        return Err(Error::Config(format!("put on stock {stock} but only {} stocks", m.n_stocks())));
                    }
                }
                _ => {}
            }
        }
        if let Some(z) = &self.verify.isometry_z {
            vector(z, n, "isometry_z")?;
        }
        if let Some(c) = &self.verify.european_claim {
            vector(c, n, "european_claim")?;
        }
        if self.solver.n_paths < 2 {
            return Err(Error::Config("solver.n_paths must be at least 2".into()));
        }
        if !(self.solver.penalization_tol > 0.0) {
            return Err(Error::Config("solver.penalization_tol must be positive".into()));
        }
        Ok(())
    }
}
