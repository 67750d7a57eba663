//! American options in the Markov-chain market.
//!
//! A self-financing portfolio with `h` stocks, `h⁰` bonds and cumulative
//! consumption `K` has value `V` satisfying the reflected equation with driver
//!
//! ```text
//! f(t, i, v, z) = −r_i v + r_i z_i − ((A' − Γ')z)_i
//! ```
//!
//! and `Z = φ_t h`, where `φ_t` has the stock price vectors as columns.

use nalgebra::{DMatrix, DVector};

use crate::bsde::MarkovDriver;
use crate::chain::{check_contraction, rate_bound_m, ChainPath, ContractionReport};
use crate::linalg::smallest_singular_value;
use crate::market::{log_sdf_increment, MarketSpec, StockCurves};
use crate::mc::{mc_samples, McEstimate};
use crate::rbsde::{optimal_stop_node, solve_reflected, Obstacle, RbsdeSolution};
use crate::schedule::Schedule;
use crate::{Error, Result, StateGridFunction, TimeGrid};

/// Smallest admissible singular value of `φ_t`.
pub const PHI_SINGULAR_TOL: f64 = 1e-10;

/// Tolerance for "wealth dominates the payoff" and terminal equality.
pub const DOMINATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
struct DriverPiece {
    rate: DVector<f64>,
    /// `A' − Γ'`.
    a_minus_gamma_t: DMatrix<f64>,
    a: DMatrix<f64>,
    sigma: DMatrix<f64>,
}

/// The driver of the superhedging equation.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeDriver {
    pieces: Schedule<DriverPiece>,
    constants: HedgeConstants,
}

/// Bounds behind the Lipschitz property of the hedging driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HedgeConstants {
    /// `sup |(A − Γ)X|_N`.
    pub c1: f64,
    /// `sup r`.
    pub c4: f64,
    /// `sup |(−r + (A − Γ))X|_N`.
    pub c5: f64,
    /// `max(c4, c5 √(3m))`, used as both `l₁` and `l₂`.
    pub c6: f64,
    pub m: f64,
}

impl HedgeDriver {
    pub fn new(market: &MarketSpec) -> Self {
        let pieces = market.regimes().map(|reg| DriverPiece {
            rate: reg.rate.clone(),
            a_minus_gamma_t: (&reg.a - &reg.gamma).transpose(),
            a: reg.a.clone(),
            sigma: reg.sigma.clone(),
        });
        let mut c1: f64 = 0.0;
        let mut c4: f64 = 0.0;
        let mut c5: f64 = 0.0;
        for p in pieces.values() {
            for i in 0..p.rate.len() {
                let mut col: DVector<f64> = p.a_minus_gamma_t.row(i).transpose();
                c1 = c1.max(col.norm());
                col[i] -= p.rate[i];
                c5 = c5.max(col.norm());
                c4 = c4.max(p.rate[i]);
            }
        }
        let m = rate_bound_m(market.chain());
        let c6 = c4.max(c5 * (3.0 * m).sqrt());
        Self { pieces, constants: HedgeConstants { c1, c4, c5, c6, m } }
    }

    pub fn constants(&self) -> HedgeConstants {
        self.constants
    }

    /// `H(t, z) = −X'(−r + (A' − Γ'))z − Σ_j A^{ji} σ^{ij} (z_j − z_i)`,
    /// the drift of the discounted value `πV` per unit of `π`.
    pub fn discounted_drift(&self, t: f64, state: usize, z: &DVector<f64>) -> f64 {
        let p = self.pieces.at(t);
        let i = state;
        let linear = -p.rate[i] * z[i] + row_dot(&p.a_minus_gamma_t, i, z);
        let covariation: f64 = (0..z.len()).map(|j| p.a[(j, i)] * p.sigma[(i, j)] * (z[j] - z[i])).sum();
        -linear - covariation
    }
}

fn row_dot(m: &DMatrix<f64>, i: usize, z: &DVector<f64>) -> f64 {
    (0..z.len()).map(|j| m[(i, j)] * z[j]).sum()
}

impl MarkovDriver for HedgeDriver {
    fn evaluate(&self, t: f64, state: usize, v: f64, z: &DVector<f64>) -> f64 {
        let p = self.pieces.at(t);
        let r = p.rate[state];
        -r * v + r * z[state] - row_dot(&p.a_minus_gamma_t, state, z)
    }

    fn lipschitz_y(&self) -> f64 {
        self.constants.c6
    }

    fn lipschitz_z(&self) -> f64 {
        self.constants.c6
    }

    fn partials(&self, t: f64, state: usize, _v: f64, _z: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let p = self.pieces.at(t);
        let r = p.rate[state];
        let mut dz: DVector<f64> = -p.a_minus_gamma_t.row(state).transpose();
        dz[state] += r;
        Some((-r, dz))
    }
}

/// `f` evaluated at `X_t = e_state`.
pub fn hedge_driver(market: &MarketSpec, t: f64, state: usize, v: f64, z: &DVector<f64>) -> f64 {
    HedgeDriver::new(market).evaluate(t, state, v, z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeContractionReport {
    pub constants: HedgeConstants,
    pub contraction: ContractionReport,
}

/// Lipschitz constants of the hedging driver and the contraction condition
/// evaluated with `l₂ = c6`.
pub fn contraction_report(market: &MarketSpec, grid_steps: usize) -> Result<HedgeContractionReport> {
    let constants = HedgeDriver::new(market).constants();
    let contraction = check_contraction(market.chain(), constants.c6, grid_steps)?;
    Ok(HedgeContractionReport { constants, contraction })
}

/// Exercise value `g(t, state)` sampled on a grid; the terminal claim is `g(T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Payoff {
    pub g: StateGridFunction,
}

impl Payoff {
    pub fn new(g: StateGridFunction) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::PreconditionUnmet("payoff must be finite".into()));
        }
        Ok(Self { g })
    }

    pub fn from_fn(grid: TimeGrid, n_states: usize, f: impl FnMut(f64, usize) -> f64) -> Result<Self> {
        Self::new(StateGridFunction::from_fn(grid, n_states, f))
    }

    pub fn zero(grid: TimeGrid, n_states: usize) -> Self {
        Self { g: StateGridFunction::zeros(grid, n_states) }
    }

    /// `max(strike − S^stock_t, 0)` on the grid of `curves`.
    pub fn put(curves: &StockCurves, stock: usize, strike: f64) -> Result<Self> {
        let s = curves
            .s
            .get(stock)
            .ok_or_else(|| Error::DimensionMismatch(format!("stock {stock} of {}", curves.n_stocks())))?;
        let values = s.values.iter().map(|v| v.map(|p| (strike - p).max(0.0))).collect();
        Self::new(StateGridFunction { grid: s.grid, values })
    }

    pub fn grid(&self) -> TimeGrid {
        self.g.grid
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.g.terminal()
    }

    pub fn obstacle(&self) -> Obstacle {
        Obstacle { g: self.g.clone() }
    }
}

/// Superhedging value `V`, reflection `K` and `Z` on the payoff grid.
pub fn price_american(market: &MarketSpec, payoff: &Payoff) -> Result<RbsdeSolution> {
    let driver = HedgeDriver::new(market);
    let report = check_contraction(market.chain(), driver.lipschitz_z(), payoff.grid().steps())?;
    if !report.holds {
        log::warn!(
            "contraction condition fails for the hedging driver (margin {:.3e} at t = {}, state {})",
            report.worst_margin,
            report.worst_time,
            report.worst_state
        );
    }
    solve_reflected(market.chain(), &driver, payoff.terminal(), &payoff.obstacle(), payoff.grid().steps())
}

/// Portfolio per grid node and state.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeStrategy {
    /// Stock holdings, one function per stock. `h = φ_t⁻¹ z(t)` does not
    /// depend on the current state, so every row holds the same value.
    pub h: Vec<StateGridFunction>,
    /// Bond units `h⁰ = (V − Σ h_j S_j) / B`.
    pub h0: StateGridFunction,
    /// State-frozen bond price `B_i(t) = exp(∫_0^t r(u, i) du)`.
    pub bond: StateGridFunction,
    /// Cumulative consumption, copied from the solution.
    pub k: StateGridFunction,
    /// `max |φ_t h_t − z_t|` over the grid.
    pub phi_residual: f64,
}

impl HedgeStrategy {
    pub fn grid(&self) -> TimeGrid {
        self.h0.grid
    }

    pub fn holdings(&self, k: usize, state: usize) -> DVector<f64> {
        DVector::from_fn(self.h.len(), |j, _| self.h[j].at(k, state))
    }

    /// `max |V − h⁰B − Σ h_j S_j|` over nodes and states.
    pub fn accounting_residual(&self, curves: &StockCurves, solution: &RbsdeSolution) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.grid().len() {
            for i in 0..self.h0.n_states() {
                let stocks: f64 = (0..self.h.len()).map(|j| self.h[j].at(k, i) * curves.price(j, k, i)).sum();
                let wealth = self.h0.at(k, i) * self.bond.at(k, i) + stocks;
                worst = worst.max((solution.v.at(k, i) - wealth).abs());
            }
        }
        worst
    }
}

fn bond_curves(market: &MarketSpec, grid: TimeGrid) -> StateGridFunction {
    let n = market.n_states();
    let mut log_b = DVector::zeros(n);
    let mut values = Vec::with_capacity(grid.len());
    values.push(DVector::from_element(n, 1.0));
    for k in 0..grid.steps() {
        market.regimes().for_each_piece(grid.time(k), grid.time(k + 1), |lo, hi, reg| {
            log_b.axpy(hi - lo, &reg.rate, 1.0);
        });
        values.push(log_b.map(f64::exp));
    }
    StateGridFunction { grid, values }
}

/// Solves `φ_t h = z(t)` at every node and fills in the bond position.
pub fn extract_hedge(market: &MarketSpec, curves: &StockCurves, solution: &RbsdeSolution) -> Result<HedgeStrategy> {
    let n = market.n_states();
    if curves.n_stocks() != n {
        return Err(Error::DimensionMismatch(format!(
            "hedging needs as many stocks as states, got {} stocks for {n} states",
            curves.n_stocks()
        )));
    }
    let grid = solution.grid();
    if curves.grid != grid {
        return Err(Error::DimensionMismatch("stock curves and solution use different grids".into()));
    }
    let bond = bond_curves(market, grid);
    let mut h_rows = Vec::with_capacity(grid.len());
    let mut h0 = Vec::with_capacity(grid.len());
    let mut phi_residual: f64 = 0.0;
    for k in 0..grid.len() {
        let phi = &curves.phi[k];
        let sv = smallest_singular_value(phi);
        if !(sv >= PHI_SINGULAR_TOL) {
            return Err(Error::SingularPhi { time: grid.time(k), singular_value: sv });
        }
        let z = &solution.z.values[k];
        let h = phi.clone().lu().solve(z).ok_or(Error::SingularPhi { time: grid.time(k), singular_value: sv })?;
        let in_stocks = phi * &h;
        phi_residual = phi_residual.max((&in_stocks - z).amax());
        h0.push(DVector::from_fn(n, |i, _| (solution.v.at(k, i) - in_stocks[i]) / bond.at(k, i)));
        h_rows.push(h);
    }
    let h = (0..n)
        .map(|j| StateGridFunction { grid, values: h_rows.iter().map(|row| DVector::from_element(n, row[j])).collect() })
        .collect();
    Ok(HedgeStrategy {
        h,
        h0: StateGridFunction { grid, values: h0 },
        bond,
        k: solution.k.clone(),
        phi_residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationReport {
    /// `max |W_t − V_t|` over grid nodes along the path.
    pub max_gap: f64,
    /// `W_t ≥ G_t − DOMINATION_TOL` at every node.
    pub dominates: bool,
    /// `|W_T − G_T|`.
    pub terminal_gap: f64,
    pub wealth: Vec<f64>,
}

/// Runs the self-financing wealth equation
///
/// ```text
/// dW = h⁰ dB + Σ_j h_j (dS_j + δ_j'X dt) − dK
/// ```
///
/// forward on the grid skeleton of `path`, starting from `W_0 = V_0`.
///
/// The position held over `(t_n, t_{n+1}]` is the strategy at `t_{n+1}`,
/// which is known at `t_n` because the strategy is a deterministic function
/// of `(t, state)`. Stock gains follow the price dynamics with the curves at
/// `t_{n+1}` and the market data of the step; jumps inside the step are
/// booked at their end-of-step price differences. Consumption over the step
/// is the increment of `k` in the state occupied at `t_n`.
pub fn replicate_forward(
    market: &MarketSpec,
    curves: &StockCurves,
    strategy: &HedgeStrategy,
    solution: &RbsdeSolution,
    payoff: &Payoff,
    path: &ChainPath,
) -> ReplicationReport {
    let grid = strategy.grid();
    let n_stocks = strategy.h.len();
    let mut state = path.initial_state();
    let mut w = solution.v.at(0, state);
    let mut wealth = Vec::with_capacity(grid.len());
    wealth.push(w);
    let mut max_gap: f64 = 0.0;
    let mut dominates = w >= payoff.g.at(0, state) - DOMINATION_TOL;
    for n in 0..grid.steps() {
        let (lo, hi) = (grid.time(n), grid.time(n + 1));
        let reg = market.regime_at(0.5 * (lo + hi));
        let dt = hi - lo;
        let i = state;
        let a_minus_gamma_t = (&reg.a - &reg.gamma).transpose();
        let mut stock_gains = 0.0;
        for j in 0..n_stocks {
            let s = &curves.s[j].values[n + 1];
            let delta = market.dividends()[j][i];
            let price_drift = row_dot(&a_minus_gamma_t, i, s) - delta;
            let compensator = reg.a.column(i).dot(s);
            let mut jumps = 0.0;
            path.for_each_jump(lo, hi, |_, from, to| jumps += s[to] - s[from]);
            let gain = (price_drift - compensator + delta) * dt + jumps;
            stock_gains += strategy.h[j].at(n + 1, i) * gain;
        }
        let bond_value = strategy.h0.at(n + 1, i) * strategy.bond.at(n + 1, i);
        let bond_gain = bond_value * (reg.rate[i] * dt).exp_m1();
        let consumption = strategy.k.at(n + 1, i) - strategy.k.at(n, i);
        w += bond_gain + stock_gains - consumption;
        state = path.state_at(hi);
        wealth.push(w);
        max_gap = max_gap.max((w - solution.v.at(n + 1, state)).abs());
        dominates &= w >= payoff.g.at(n + 1, state) - DOMINATION_TOL;
    }
    let terminal_gap = (w - payoff.terminal()[state]).abs();
    ReplicationReport { max_gap, dominates: dominates && terminal_gap <= DOMINATION_TOL.max(max_gap), terminal_gap, wealth }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedValueReport {
    /// `Ṽ_0 = V_{x0}(0)`.
    pub value: f64,
    /// `E[∫_0^τ H(u, Z̃_u) du + π_τ G_τ]` with `τ` the first touching time.
    pub stopped: McEstimate,
    /// Smallest `π_t (V_t − G_t)` seen along the simulated paths.
    pub min_discounted_margin: f64,
    pub dominates: bool,
    pub representation_holds: bool,
}

/// Checks `Ṽ = πV ≥ πG` along paths and the optimal-stopping representation
/// of `Ṽ_0`.
pub fn discounted_value_check(
    market: &MarketSpec,
    payoff: &Payoff,
    solution: &RbsdeSolution,
    n_paths: usize,
    seed_base: u64,
) -> Result<DiscountedValueReport> {
    let driver = HedgeDriver::new(market);
    let obstacle = payoff.obstacle();
    let grid = solution.grid();
    let samples = mc_samples(market.chain(), n_paths, seed_base, |path| {
        let (stop, _) = optimal_stop_node(solution, &obstacle, path);
        let mut log_pi = 0.0;
        let mut integral = 0.0;
        let mut min_margin = f64::INFINITY;
        let mut stopped_value = f64::NAN;
        for n in 0..grid.len() {
            let t = grid.time(n);
            if n > 0 {
                log_pi += log_sdf_increment(market, path, grid.time(n - 1), t);
            }
            let pi = log_pi.exp();
            let i = path.state_at(t);
            min_margin = min_margin.min(pi * (solution.v.at(n, i) - payoff.g.at(n, i)));
            if n == stop {
                stopped_value = integral + pi * payoff.g.at(n, i);
            }
            if n < stop {
                let z_tilde = &solution.z.values[n] * pi;
                integral += driver.discounted_drift(t, i, &z_tilde) * grid.dt();
            }
        }
        (stopped_value, min_margin)
    });
    let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let stopped = McEstimate::from_samples(&values, seed_base)?;
    let min_discounted_margin = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let value = solution.initial_value(market.chain().initial_state());
    Ok(DiscountedValueReport {
        value,
        stopped,
        min_discounted_margin,
        dominates: min_discounted_margin >= -DOMINATION_TOL,
        representation_holds: stopped.agrees_with(value),
    })
}
