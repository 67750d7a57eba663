//! Markov-chain market with a stochastic discount function
//!
//! ```text
//! π_t = exp[−∫_0^t X'_{u−} C_u dX_u − ∫_0^t D'_u X_u du]
//! ```
//!
//! `X` is piecewise constant, so the `dX` integral is the sum over jumps
//! `i → j` of `C_ij − C_ii`: `π` decays at rate `D_i` in state `i` and is
//! multiplied by `exp(C_ii − C_ij)` at each jump.

use nalgebra::{DMatrix, DVector};

use crate::chain::{ChainPath, ChainSpec};
use crate::linalg::smallest_singular_value;
use crate::schedule::{merged_breakpoints, Schedule};
use crate::{Error, Result, StateGridFunction, TimeGrid};

/// Default upper bound on the short rate (per year).
pub const DEFAULT_R_MAX: f64 = 1.0;

/// Default seeding distance beyond the horizon, as a multiple of `T`.
pub const DEFAULT_EXTENSION_FACTOR: f64 = 10.0;

/// `σ^{ij} = exp(C^{ii} − C^{ij}) − 1`, with an exactly zero diagonal.
pub fn sigma_matrix(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.nrows();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (c[(i, i)] - c[(i, j)]).exp() - 1.0 })
}

/// `Γ^{ii} = A^{ii} − D^i`, `Γ^{ij} = A^{ij} exp(C^{jj} − C^{ji})`.
pub fn gamma_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            a[(i, i)] - d[i]
        } else {
            a[(i, j)] * (c[(j, j)] - c[(j, i)]).exp()
        }
    })
}

/// Market data constant on one interval of the merged schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub start: f64,
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    /// `r_i = D_i − (σA)_{ii}`.
    pub rate: DVector<f64>,
}

impl Regime {
    fn new(start: f64, a: &DMatrix<f64>, c: &DMatrix<f64>, d: &DVector<f64>) -> Self {
        let sigma = sigma_matrix(c);
        let sa = &sigma * a;
        let rate = DVector::from_fn(a.nrows(), |i, _| d[i] - sa[(i, i)]);
        Self { start, a: a.clone(), c: c.clone(), d: d.clone(), gamma: gamma_matrix(a, c, d), sigma, rate }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    chain: ChainSpec,
    c: Schedule<DMatrix<f64>>,
    d: Schedule<DVector<f64>>,
    dividends: Vec<DVector<f64>>,
    r_max: f64,
    regimes: Schedule<Regime>,
}

impl MarketSpec {
    pub fn new(
        chain: ChainSpec,
        c_schedule: Vec<(f64, DMatrix<f64>)>,
        d_schedule: Vec<(f64, DVector<f64>)>,
        dividends: Vec<DVector<f64>>,
        r_max: f64,
    ) -> Result<Self> {
        let n = chain.n_states();
        let horizon = chain.horizon();
        if c_schedule.iter().any(|(_, c)| c.nrows() != n || c.ncols() != n || c.iter().any(|x| !x.is_finite())) {
            return Err(Error::DimensionMismatch(format!("every C must be a finite {n}x{n} matrix")));
        }
        if d_schedule.iter().any(|(_, d)| d.len() != n || d.iter().any(|x| !x.is_finite())) {
            return Err(Error::DimensionMismatch(format!("every D must be a finite vector of length {n}")));
        }
        if dividends.iter().any(|d| d.len() != n) {
            return Err(Error::DimensionMismatch(format!("every dividend vector must have length {n}")));
        }
        if let Some((j, _)) = dividends.iter().enumerate().find(|(_, d)| d.iter().any(|&x| !(x > 0.0))) {
            return Err(Error::PreconditionUnmet(format!("dividends of stock {j} must be strictly positive")));
        }
        if !(r_max > 0.0) {
            return Err(Error::PreconditionUnmet(format!("r_max must be positive, got {r_max}")));
        }
        let c = Schedule::new(c_schedule, horizon)?;
        let d = Schedule::new(d_schedule, horizon)?;
        let mut starts = vec![0.0];
        starts.extend(merged_breakpoints(
            &[chain.schedule().breakpoints(), c.breakpoints(), d.breakpoints()],
            0.0,
            horizon,
        ));
        let regimes = Schedule::new(
            starts
                .iter()
                .map(|&s| (s, Regime::new(s, chain.generator_at(s), c.at(s), d.at(s))))
                .collect(),
            horizon,
        )?;
        let market = Self { chain, c, d, dividends, r_max, regimes };
        market.check_rate_bounds()?;
        Ok(market)
    }

    /// Time-homogeneous market.
    pub fn constant(chain: ChainSpec, c: DMatrix<f64>, d: DVector<f64>, dividends: Vec<DVector<f64>>) -> Result<Self> {
        Self::new(chain, vec![(0.0, c)], vec![(0.0, d)], dividends, DEFAULT_R_MAX)
    }

    pub fn chain(&self) -> &ChainSpec {
        &self.chain
    }

    pub fn n_states(&self) -> usize {
        self.chain.n_states()
    }

    pub fn n_stocks(&self) -> usize {
        self.dividends.len()
    }

    pub fn horizon(&self) -> f64 {
        self.chain.horizon()
    }

    pub fn dividends(&self) -> &[DVector<f64>] {
        &self.dividends
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn c_at(&self, t: f64) -> &DMatrix<f64> {
        self.c.at(t)
    }

    pub fn d_at(&self, t: f64) -> &DVector<f64> {
        self.d.at(t)
    }

    pub fn regimes(&self) -> &Schedule<Regime> {
        &self.regimes
    }

    pub fn regime_at(&self, t: f64) -> &Regime {
        self.regimes.at(t)
    }

    pub fn gamma_at(&self, t: f64) -> &DMatrix<f64> {
        &self.regime_at(t).gamma
    }

    pub fn sigma_at(&self, t: f64) -> &DMatrix<f64> {
        &self.regime_at(t).sigma
    }

    /// Same market on a chain started elsewhere.
    pub fn with_initial_state(&self, state: usize) -> Result<Self> {
        Ok(Self { chain: self.chain.with_initial_state(state)?, ..self.clone() })
    }

    /// `0 ≤ r ≤ r_max` in every regime; returns `(min r, max r)`.
    pub fn check_rate_bounds(&self) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for reg in self.regimes.values() {
            for (i, &r) in reg.rate.iter().enumerate() {
                if !(0.0..=self.r_max).contains(&r) {
                    return Err(Error::RateBoundViolated { rate: r, time: reg.start, state: i, r_max: self.r_max });
                }
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        Ok((lo, hi))
    }
}

/// `r_t = D'_t X_t − X'_t σ_t A_t X_t` with `X_t = e_state`.
pub fn short_rate(market: &MarketSpec, t: f64, state: usize) -> f64 {
    let reg = market.regime_at(t);
    let x = crate::chain::unit(market.n_states(), state);
    reg.d.dot(&x) - x.dot(&(&reg.sigma * (&reg.a * &x)))
}

/// [`short_rate`] with the `[0, r_max]` bound enforced.
pub fn short_rate_checked(market: &MarketSpec, t: f64, state: usize) -> Result<f64> {
    let rate = short_rate(market, t, state);
    if !(0.0..=market.r_max).contains(&rate) {
        return Err(Error::RateBoundViolated { rate, time: t, state, r_max: market.r_max });
    }
    Ok(rate)
}

/// `log(π_b / π_a)` along the path.
pub fn log_sdf_increment(market: &MarketSpec, path: &ChainPath, a: f64, b: f64) -> f64 {
    let mut log_pi = 0.0;
    path.for_each_sojourn(a, b, |lo, hi, state| {
        market.d.for_each_piece(lo, hi, |l, h, d| log_pi -= d[state] * (h - l));
    });
    path.for_each_jump(a, b, |tau, from, to| {
        let c = market.c.at(tau);
        log_pi -= c[(from, to)] - c[(from, from)];
    });
    log_pi
}

/// Closed-form `π` at every grid node, `π_0 = 1`.
pub fn sdf_path(market: &MarketSpec, path: &ChainPath, grid_steps: usize) -> Result<Vec<f64>> {
    let grid = TimeGrid::new(market.horizon(), grid_steps)?;
    let mut log_pi = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    out.push(1.0);
    for k in 0..grid.steps() {
        log_pi += log_sdf_increment(market, path, grid.time(k), grid.time(k + 1));
        out.push(log_pi.exp());
    }
    Ok(out)
}

/// Calls `f(lo, hi, state, regime)` on each piece of `[a, b]` where both the
/// state and the market regime are constant.
fn for_each_market_piece(market: &MarketSpec, path: &ChainPath, a: f64, b: f64, mut f: impl FnMut(f64, f64, usize, &Regime)) {
    path.for_each_sojourn(a, b, |lo, hi, state| {
        market.regimes.for_each_piece(lo, hi, |l, h, reg| f(l, h, state, reg));
    });
}

/// Calls `f(lo, hi, state, regime, π_lo)` on each constant piece of `[0, T]`
/// in time order, with `π_lo` the discount factor at the piece start.
pub(crate) fn for_each_discounted_piece(
    market: &MarketSpec,
    path: &ChainPath,
    mut f: impl FnMut(f64, f64, usize, &Regime, f64),
) {
    let mut log_pi = 0.0;
    let mut previous: Option<usize> = None;
    path.for_each_sojourn(0.0, market.horizon(), |lo, hi, state| {
        if let Some(from) = previous {
            let c = market.c.at(lo);
            log_pi -= c[(from, state)] - c[(from, from)];
        }
        market.regimes.for_each_piece(lo, hi, |l, h, reg| {
            f(l, h, state, reg, log_pi.exp());
            log_pi -= reg.d[state] * (h - l);
        });
        previous = Some(state);
    });
}

/// Integrates `dπ = −π r dt + π_− X'_− σ_− dM` with one Euler step per
/// constant piece and exact jumps, and returns the max gap to [`sdf_path`].
pub fn sdf_dynamics_residual(market: &MarketSpec, path: &ChainPath, grid_steps: usize) -> Result<f64> {
    let closed = sdf_path(market, path, grid_steps)?;
    let grid = TimeGrid::new(market.horizon(), grid_steps)?;
    let mut pi = 1.0;
    let mut worst: f64 = 0.0;
    for k in 0..grid.steps() {
        let (lo, hi) = (grid.time(k), grid.time(k + 1));
        let mut events: Vec<(f64, f64, usize, f64)> = Vec::new();
        for_each_market_piece(market, path, lo, hi, |l, h, i, reg| {
            // −r dt plus the compensator −X'σAX dt of the dM term
            let compensator = reg.sigma.row(i).dot(&reg.a.column(i).transpose());
            events.push((l, h, i, -reg.rate[i] - compensator));
        });
        let mut jumps = Vec::new();
        path.for_each_jump(lo, hi, |tau, from, to| jumps.push((tau, from, to)));
        let mut next_jump = jumps.iter().peekable();
        for (l, h, _, drift) in events {
            while let Some(&&(tau, from, to)) = next_jump.peek() {
                if tau > l {
                    break;
                }
                pi *= 1.0 + market.sigma_at(tau)[(from, to)];
                next_jump.next();
            }
            pi += pi * drift * (h - l);
        }
        for &(tau, from, to) in next_jump {
            pi *= 1.0 + market.sigma_at(tau)[(from, to)];
        }
        worst = worst.max((pi - closed[k + 1]).abs());
    }
    Ok(worst)
}

/// Per-stock price curves `s_j(t) ∈ ℝ^N` with `S^j_t = s_j(t)'X_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StockCurves {
    pub grid: TimeGrid,
    pub s: Vec<StateGridFunction>,
    /// `φ_t`, the `N × n` matrix whose columns are `s_j(t)`.
    pub phi: Vec<DMatrix<f64>>,
    /// Smallest price on the grid (`c₂`).
    pub lower_bound: f64,
    /// Largest price on the grid (`c₃`).
    pub upper_bound: f64,
    /// Smallest singular value of `φ_t` over the grid when `n = N`.
    pub min_phi_singular_value: Option<f64>,
}

impl StockCurves {
    pub fn n_stocks(&self) -> usize {
        self.s.len()
    }

    pub fn price(&self, stock: usize, k: usize, state: usize) -> f64 {
        self.s[stock].at(k, state)
    }
}

/// Solves `Γ' s = −δ`, the stationary price vector for constant data.
pub fn stationary_stock_prices(gamma: &DMatrix<f64>, dividend: &DVector<f64>) -> Result<DVector<f64>> {
    gamma
        .transpose()
        .lu()
        .solve(&(-dividend))
        .ok_or(Error::UnstableGamma { max_real_part: 0.0 })
}

fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

fn stock_rk4(gamma_t: &DMatrix<f64>, delta: &DVector<f64>, s: &DVector<f64>, h: f64) -> DVector<f64> {
    let rhs = |s: &DVector<f64>| -(gamma_t * s) - delta;
    let k1 = rhs(s);
    let k2 = rhs(&(s + &k1 * (0.5 * h)));
    let k3 = rhs(&(s + &k2 * (0.5 * h)));
    let k4 = rhs(&(s + &k3 * h));
    s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Stock price curves from `ds/dt + Γ'_t s = −δ`.
///
/// Prices are discounted future dividends, so the curve is seeded with the
/// stationary solution of the final regime at `T + horizon_extension` and
/// integrated backward with RK4 onto the grid.
pub fn stock_curves(market: &MarketSpec, steps: usize, horizon_extension: f64) -> Result<StockCurves> {
    let grid = TimeGrid::new(market.horizon(), steps)?;
    if !(horizon_extension >= 0.0) {
        return Err(Error::PreconditionUnmet(format!("horizon extension must be >= 0, got {horizon_extension}")));
    }
    let last = market.regime_at(market.horizon());
    let gamma_t_last = last.gamma.transpose();
    let max_re = max_real_eigenvalue(&gamma_t_last);
    if !(max_re < 0.0) {
        return Err(Error::UnstableGamma { max_real_part: max_re });
    }
    let n = market.n_states();
    let dt = grid.dt();
    let ext_steps = (horizon_extension / dt).ceil() as usize;
    let mut curves = Vec::with_capacity(market.n_stocks());
    for delta in &market.dividends {
        let mut s = stationary_stock_prices(&last.gamma, delta)?;
        if ext_steps > 0 {
            let h = horizon_extension / ext_steps as f64;
            for _ in 0..ext_steps {
                s = stock_rk4(&gamma_t_last, delta, &s, -h);
            }
        }
        let mut values = vec![DVector::zeros(n); grid.len()];
        values[grid.steps()] = s.clone();
        for k in (0..grid.steps()).rev() {
            let (lo, hi) = (grid.time(k), grid.time(k + 1));
            let mut cuts = merged_breakpoints(&[market.regimes.breakpoints()], lo, hi);
            cuts.insert(0, lo);
            let mut upper = hi;
            for &lower in cuts.iter().rev() {
                let gamma_t = market.gamma_at(0.5 * (lower + upper)).transpose();
                s = stock_rk4(&gamma_t, delta, &s, lower - upper);
                upper = lower;
            }
            values[k] = s.clone();
        }
        curves.push(StateGridFunction { grid, values });
    }
    let mut lower_bound = f64::INFINITY;
    let mut upper_bound = f64::NEG_INFINITY;
    for (j, curve) in curves.iter().enumerate() {
        for (k, v) in curve.values.iter().enumerate() {
            for (i, &price) in v.iter().enumerate() {
                if !(price > 0.0) || !price.is_finite() {
                    return Err(Error::NonPositivePrices { stock: j, state: i, time: grid.time(k), price });
                }
                lower_bound = lower_bound.min(price);
                upper_bound = upper_bound.max(price);
            }
        }
    }
    let phi: Vec<DMatrix<f64>> = (0..grid.len())
        .map(|k| DMatrix::from_fn(n, curves.len(), |i, j| curves[j].at(k, i)))
        .collect();
    let min_phi_singular_value = (curves.len() == n)
        .then(|| phi.iter().map(smallest_singular_value).fold(f64::INFINITY, f64::min));
    Ok(StockCurves { grid, s: curves, phi, lower_bound, upper_bound, min_phi_singular_value })
}

/// Integrates `dS = ((A'−Γ')s)'X dt − δ'X dt + s'dM` along the path (one
/// Euler step per constant piece, exact jumps) and returns the largest gap to
/// `s(t)'X_t` over grid nodes and stocks.
pub fn stock_sde_residual(market: &MarketSpec, curves: &StockCurves, path: &ChainPath) -> f64 {
    let grid = curves.grid;
    let mut worst: f64 = 0.0;
    for (j, curve) in curves.s.iter().enumerate() {
        let delta = &market.dividends[j];
        let s_at = |t: f64| DVector::from_fn(market.n_states(), |i, _| curve.interpolate(t, i));
        let mut price = curve.at(0, path.initial_state());
        for k in 0..grid.steps() {
            let (lo, hi) = (grid.time(k), grid.time(k + 1));
            let mut pieces = Vec::new();
            for_each_market_piece(market, path, lo, hi, |l, h, i, reg| pieces.push((l, h, i, reg.clone())));
            let mut jumps = Vec::new();
            path.for_each_jump(lo, hi, |tau, from, to| jumps.push((tau, from, to)));
            let mut next_jump = jumps.iter().peekable();
            for (l, h, i, reg) in pieces {
                while let Some(&&(tau, from, to)) = next_jump.peek() {
                    if tau > l {
                        break;
                    }
                    let s = s_at(tau);
                    price += s[to] - s[from];
                    next_jump.next();
                }
                let s = s_at(l);
                let a_minus_gamma = (&reg.a - &reg.gamma).transpose();
                let drift = (a_minus_gamma * &s)[i] - delta[i];
                let compensator = reg.a.column(i).dot(&s);
                price += (drift - compensator) * (h - l);
            }
            for &(tau, from, to) in next_jump {
                let s = s_at(tau);
                price += s[to] - s[from];
            }
            worst = worst.max((price - curve.at(k + 1, path.state_at(hi))).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym2() -> ChainSpec {
        ChainSpec::constant(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]), 0, 1.0).unwrap()
    }

    #[test]
    fn sigma_of_zero_is_zero() {
        assert_eq!(sigma_matrix(&DMatrix::zeros(3, 3)), DMatrix::zeros(3, 3));
    }

    #[test]
    fn sigma_with_unit_diagonal() {
        let s = sigma_matrix(&DMatrix::identity(3, 3));
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { std::f64::consts::E - 1.0 };
                assert!((s[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gamma_two_state_by_hand() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let g = gamma_matrix(&a, &DMatrix::zeros(2, 2), &DVector::from_element(2, 0.05));
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[-1.05, 1.0, 1.0, -1.05]));
        assert_eq!(gamma_matrix(&a, &DMatrix::zeros(2, 2), &DVector::zeros(2)), a);
    }

    #[test]
    fn negative_rate_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        let err = MarketSpec::constant(sym2(), c, DVector::from_element(2, 0.01), vec![DVector::from_element(2, 1.0)])
            .unwrap_err();
        assert!(matches!(err, Error::RateBoundViolated { .. }), "{err}");
    }

    #[test]
    fn nonpositive_dividends_rejected() {
        let err = MarketSpec::constant(
            sym2(),
            DMatrix::zeros(2, 2),
            DVector::from_element(2, 0.05),
            vec![DVector::from_vec(vec![1.0, 0.0])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::PreconditionUnmet(_)));
    }

    #[test]
    fn pure_discounting_without_jumps() {
        let m = MarketSpec::constant(sym2(), DMatrix::zeros(2, 2), DVector::from_vec(vec![0.03, 0.07]), vec![
            DVector::from_element(2, 1.0),
        ])
        .unwrap();
        let pi = sdf_path(&m, &ChainPath::constant(1, 1.0), 10).unwrap();
        assert!((pi[10] - (-0.07f64).exp()).abs() < 1e-15);
        assert!((pi[4] - (-0.07f64 * 0.4).exp()).abs() < 1e-15);
    }

    #[test]
    fn stationary_two_state_prices() {
        let g = DMatrix::from_row_slice(2, 2, &[-1.05, 1.0, 1.0, -1.05]);
        let s = stationary_stock_prices(&g, &DVector::from_element(2, 1.0)).unwrap();
        assert!((s[0] - 20.0).abs() < 1e-12 && (s[1] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn single_state_perpetuity() {
        let chain = ChainSpec::constant(DMatrix::zeros(1, 1), 0, 1.0).unwrap();
        let m = MarketSpec::constant(chain, DMatrix::zeros(1, 1), DVector::from_element(1, 0.04), vec![
            DVector::from_element(1, 2.0),
        ])
        .unwrap();
        let curves = stock_curves(&m, 20, 10.0).unwrap();
        for v in &curves.s[0].values {
            assert!((v[0] - 50.0).abs() < 1e-10);
        }
        assert!(stock_sde_residual(&m, &curves, &ChainPath::constant(0, 1.0)) < 1e-10);
        assert_eq!(short_rate(&m, 0.5, 0), 0.04);
    }
}
