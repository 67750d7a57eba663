//! Reflected BSDEs
//!
//! ```text
//! V_t = ξ + ∫_t^T f(u, V_u, Z_u) du + K_T − K_t − ∫_t^T Z'_u dM_u,
//! V_t ≥ G_t,   K continuous, increasing, K_0 = 0,   ∫ (V − G) dK = 0,
//! ```
//!
//! for Markovian data `G_t = g(t)'X_t`. The value, integrand and reflection
//! are all state-indexed grid functions; pathwise `K_t` is `k` composed with
//! the realized state.

use nalgebra::DVector;

use crate::bsde::{fd_partials, solve_bsde, BsdeSolution, MarkovDriver, Scheme, SolveOptions};
use crate::chain::{ChainPath, ChainSpec};
use crate::{Error, Result, StateGridFunction, TimeGrid};

/// Tolerance for "the value touches the obstacle".
pub const TOUCH_TOL: f64 = 1e-9;

/// Largest penalty parameter tried by [`penalization_limit`].
pub const MAX_PENALTY: u64 = 1 << 20;

/// Lower barrier `g(t, state)` sampled on the solver grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub g: StateGridFunction,
}

impl Obstacle {
    pub fn new(g: StateGridFunction) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::PreconditionUnmet("obstacle has non-finite values".into()));
        }
        Ok(Self { g })
    }

    pub fn from_fn(grid: TimeGrid, n_states: usize, f: impl FnMut(f64, usize) -> f64) -> Result<Self> {
        Self::new(StateGridFunction::from_fn(grid, n_states, f))
    }

    pub fn constant(grid: TimeGrid, n_states: usize, value: f64) -> Result<Self> {
        Self::from_fn(grid, n_states, |_, _| value)
    }

    pub fn grid(&self) -> TimeGrid {
        self.g.grid
    }

    pub fn value_at(&self, t: f64, state: usize) -> f64 {
        self.g.interpolate(t, state)
    }

    /// `g(T, i) ≤ ξ_i` for every state.
    pub fn check_terminal(&self, terminal: &DVector<f64>) -> Result<()> {
        let g_t = self.g.terminal();
        for i in 0..terminal.len() {
            let gap = g_t[i] - terminal[i];
            if gap > 1e-12 * terminal[i].abs().max(1.0) {
                return Err(Error::ObstacleIncompatible { state: i, gap });
            }
        }
        Ok(())
    }

    /// `sup g⁺` over the grid.
    pub fn sup_positive_part(&self) -> f64 {
        self.g.values.iter().map(|v| v.max()).fold(0.0, f64::max)
    }

    fn check_grid(&self, spec: &ChainSpec, steps: usize) -> Result<()> {
        let grid = self.grid();
        if grid.steps() != steps || grid.horizon() != spec.horizon() || self.g.n_states() != spec.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "obstacle grid ({} steps, T={}, {} states) does not match the solve ({steps} steps, T={}, {} states)",
                grid.steps(),
                grid.horizon(),
                self.g.n_states(),
                spec.horizon(),
                spec.n_states()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbsdeSolution {
    pub v: StateGridFunction,
    /// Canonical integrand `Z_t = v(t)`.
    pub z: StateGridFunction,
    /// Cumulative reflection per state, `k(0) = 0`.
    pub k: StateGridFunction,
    /// `(n, sup distance to the returned candidate)` when built by penalization.
    pub penalization_trace: Option<Vec<(u64, f64)>>,
}

impl RbsdeSolution {
    pub fn grid(&self) -> TimeGrid {
        self.v.grid
    }

    pub fn initial_value(&self, state: usize) -> f64 {
        self.v.at(0, state)
    }

    /// `min (v − g)` over the grid; nonnegative when the obstacle is respected.
    pub fn min_margin(&self, obstacle: &Obstacle) -> f64 {
        self.v
            .values
            .iter()
            .zip(&obstacle.g.values)
            .map(|(v, g)| (v - g).min())
            .fold(f64::INFINITY, f64::min)
    }

    /// `k(0) = 0` and every state row nondecreasing.
    pub fn k_is_valid(&self) -> bool {
        self.k.values[0].iter().all(|&x| x == 0.0)
            && self.k.values.windows(2).all(|w| w[1].iter().zip(w[0].iter()).all(|(b, a)| b >= a))
    }
}

fn cumulative(grid: TimeGrid, increments: &[DVector<f64>], n: usize) -> StateGridFunction {
    let mut values = Vec::with_capacity(grid.len());
    let mut acc = DVector::zeros(n);
    values.push(acc.clone());
    for dk in increments {
        acc += dk;
        values.push(acc.clone());
    }
    StateGridFunction { grid, values }
}

/// Reflected backward Euler sweep.
///
/// Each step forms the predictor
/// `ỹ_i = y_i(t+Δ) + Δ[(A'y(t+Δ))_i + f(t, i, y_i(t+Δ), y(t+Δ))]`,
/// projects `y_i(t) = max(g_i(t), ỹ_i)`, and books the push
/// `Δk_i = y_i(t) − ỹ_i` on `[t, t+Δ]`.
pub fn solve_reflected(
    spec: &ChainSpec,
    driver: &dyn MarkovDriver,
    terminal: &DVector<f64>,
    obstacle: &Obstacle,
    steps: usize,
) -> Result<RbsdeSolution> {
    let n = spec.n_states();
    if terminal.len() != n {
        return Err(Error::DimensionMismatch(format!("terminal has {} entries for {n} states", terminal.len())));
    }
    obstacle.check_grid(spec, steps)?;
    obstacle.check_terminal(terminal)?;
    let grid = obstacle.grid();
    let dt = grid.dt();
    let mut v = vec![DVector::zeros(n); grid.len()];
    let mut dk = vec![DVector::zeros(n); grid.steps()];
    v[grid.steps()] = terminal.clone();
    for step in (0..grid.steps()).rev() {
        let t = grid.time(step);
        let next = &v[step + 1];
        let gen = spec.generator_at(0.5 * (t + grid.time(step + 1)));
        let drift = gen.tr_mul(next);
        let mut current = DVector::zeros(n);
        for i in 0..n {
            let predictor = next[i] + dt * (drift[i] + driver.evaluate(t, i, next[i], next));
            if !predictor.is_finite() {
                return Err(Error::NonFinite { time: t, state: i });
            }
            let floor = obstacle.g.at(step, i);
            if floor > predictor {
                current[i] = floor;
                dk[step][i] = floor - predictor;
            } else {
                current[i] = predictor;
            }
        }
        v[step] = current;
    }
    let v = StateGridFunction { grid, values: v };
    Ok(RbsdeSolution { z: v.clone(), k: cumulative(grid, &dk, n), v, penalization_trace: None })
}

/// Dynamic-programming value of optimal stopping on the grid:
/// `w(T) = ξ`, `w_i(t) = max(g_i(t), continuation_i)`.
pub fn snell_oracle(
    spec: &ChainSpec,
    driver: &dyn MarkovDriver,
    terminal: &DVector<f64>,
    obstacle: &Obstacle,
    steps: usize,
) -> Result<StateGridFunction> {
    obstacle.check_grid(spec, steps)?;
    let grid = obstacle.grid();
    let n = spec.n_states();
    let dt = grid.dt();
    let mut w = terminal.clone();
    let mut out = vec![w.clone()];
    for step in (0..grid.steps()).rev() {
        let t = grid.time(step);
        let gen = spec.generator_at(0.5 * (t + grid.time(step + 1)));
        let stop = &obstacle.g.values[step];
        let continuation: Vec<f64> = (0..n)
            .map(|i| {
                let expected_change = gen.column(i).dot(&w);
                w[i] + dt * (expected_change + driver.evaluate(t, i, w[i], &w))
            })
            .collect();
        w = DVector::from_fn(n, |i, _| continuation[i].max(stop[i]));
        out.push(w.clone());
    }
    out.reverse();
    StateGridFunction::new(grid, out)
}

/// `f + n·(y − g(t))⁻`.
pub struct PenalizedDriver<'a> {
    pub base: &'a dyn MarkovDriver,
    pub obstacle: &'a Obstacle,
    pub n: f64,
}

impl MarkovDriver for PenalizedDriver<'_> {
    fn evaluate(&self, t: f64, state: usize, y: f64, z: &DVector<f64>) -> f64 {
        let shortfall = (self.obstacle.value_at(t, state) - y).max(0.0);
        self.base.evaluate(t, state, y, z) + self.n * shortfall
    }

    fn lipschitz_y(&self) -> f64 {
        self.base.lipschitz_y() + self.n
    }

    fn lipschitz_z(&self) -> f64 {
        self.base.lipschitz_z()
    }

    fn partials(&self, t: f64, state: usize, y: f64, z: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let (mut dy, dz) = fd_partials(self.base, t, state, y, z);
        if y < self.obstacle.value_at(t, state) {
            dy -= self.n;
        }
        Some((dy, dz))
    }
}

/// Penalized equation with driver `f + n(v − g)⁻`, always on implicit Euler.
pub fn solve_penalized(
    spec: &ChainSpec,
    driver: &dyn MarkovDriver,
    terminal: &DVector<f64>,
    obstacle: &Obstacle,
    n: u64,
    steps: usize,
) -> Result<BsdeSolution> {
    if n < 1 {
        return Err(Error::PreconditionUnmet("penalty n must be >= 1".into()));
    }
    obstacle.check_grid(spec, steps)?;
    let penalized = PenalizedDriver { base: driver, obstacle, n: n as f64 };
    solve_bsde(spec, &penalized, terminal, SolveOptions::new(steps, Scheme::ImplicitEuler))
}

/// `kⁿ(t) = n ∫_0^t (vⁿ − g)⁻ du` by the trapezoidal rule, per state.
pub fn penalty_reflection(solution: &BsdeSolution, obstacle: &Obstacle, n: u64) -> StateGridFunction {
    let grid = solution.y.grid;
    let dt = grid.dt();
    let shortfall = |k: usize| (&obstacle.g.values[k] - &solution.y.values[k]).map(|x| x.max(0.0));
    let increments: Vec<DVector<f64>> = (0..grid.steps())
        .map(|k| (shortfall(k) + shortfall(k + 1)) * (0.5 * dt * n as f64))
        .collect();
    cumulative(grid, &increments, solution.y.n_states())
}

/// Doubles `n` from 1 until successive penalized solutions differ by less
/// than `tol` in sup norm.
pub fn penalization_limit(
    spec: &ChainSpec,
    driver: &dyn MarkovDriver,
    terminal: &DVector<f64>,
    obstacle: &Obstacle,
    steps: usize,
    tol: f64,
) -> Result<RbsdeSolution> {
    if !(tol > 0.0) {
        return Err(Error::PreconditionUnmet(format!("tol must be positive, got {tol}")));
    }
    let mut n = 1u64;
    let mut history = vec![(n, solve_penalized(spec, driver, terminal, obstacle, n, steps)?)];
    loop {
        if n >= MAX_PENALTY {
            let last_distance = match history.as_slice() {
                [.., a, b] => a.1.y.sup_distance(&b.1.y),
                _ => f64::INFINITY,
            };
            return Err(Error::NoConvergence { n, last_distance });
        }
        n *= 2;
        let next = solve_penalized(spec, driver, terminal, obstacle, n, steps)?;
        let change = history.last().expect("non-empty").1.y.sup_distance(&next.y);
        history.push((n, next));
        log::debug!("penalization n={n}: sup change {change:.3e}");
        if change < tol {
            break;
        }
    }
    let (n_final, candidate) = history.last().expect("non-empty");
    let trace = history.iter().map(|(n, s)| (*n, s.y.sup_distance(&candidate.y))).collect();
    let k = penalty_reflection(candidate, obstacle, *n_final);
    Ok(RbsdeSolution {
        v: candidate.y.clone(),
        z: candidate.y.clone(),
        k,
        penalization_trace: Some(trace),
    })
}

/// `max_i |Σ_m (v − g)_i(t_m)·(k_i(t_{m+1}) − k_i(t_m))|`.
///
/// Each reflection increment is paired with the node where the push was
/// applied, so the sum vanishes for solutions of [`solve_reflected`].
pub fn skorokhod_integral(solution: &RbsdeSolution, obstacle: &Obstacle) -> f64 {
    let n = solution.v.n_states();
    let grid = solution.grid();
    (0..n)
        .map(|i| {
            (0..grid.steps())
                .map(|m| {
                    let gap = solution.v.at(m, i) - obstacle.g.at(m, i);
                    gap * (solution.k.at(m + 1, i) - solution.k.at(m, i))
                })
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// First grid time at which `v_{X_t}(t) ≤ g_{X_t}(t) + 1e−9` along the path; `T` if never.
pub fn optimal_stop_time(solution: &RbsdeSolution, obstacle: &Obstacle, path: &ChainPath) -> f64 {
    optimal_stop_node(solution, obstacle, path).1
}

pub(crate) fn optimal_stop_node(solution: &RbsdeSolution, obstacle: &Obstacle, path: &ChainPath) -> (usize, f64) {
    let grid = solution.grid();
    for k in 0..=grid.steps() {
        let t = grid.time(k);
        let i = path.state_at(t);
        if solution.v.at(k, i) <= obstacle.g.at(k, i) + TOUCH_TOL {
            return (k, t);
        }
    }
    (grid.steps(), grid.horizon())
}
