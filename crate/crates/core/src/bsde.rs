//! Markovian BSDEs `Y_t = ξ + ∫_t^T f(u, Y_u, Z_u) du − ∫_t^T Z'_u dM_u`.
//!
//! With `ξ = ξ_vec' X_T` and a driver depending on `(t, state)`, the solution
//! is `Y_t = y(t)'X_t`, `Z_t = y(t)` where `y` solves the backward system
//!
//! ```text
//! y_i'(t) = −(A_t' y(t))_i − f(t, i, y_i(t), y(t)),   y(T) = ξ_vec.
//! ```
//!
//! A jump `i → j` moves `Y` by `y_j − y_i = Z'ΔX`, so this `Z` is the one
//! representative that matches every possible jump.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{check_contraction, ChainPath, ChainSpec};
use crate::{Error, Result, StateGridFunction, TimeGrid};

/// A driver `f(t, state, y, z)` with Lipschitz constants `l₁` (in `y`) and
/// `l₂` (in `z`, against the `Ψ` seminorm).
pub trait MarkovDriver: Send + Sync {
    fn evaluate(&self, t: f64, state: usize, y: f64, z: &DVector<f64>) -> f64;

    fn lipschitz_y(&self) -> f64;

    fn lipschitz_z(&self) -> f64;

    /// Exact `(∂f/∂y, ∂f/∂z)` when cheaply available; finite differences otherwise.
    fn partials(&self, _t: f64, _state: usize, _y: f64, _z: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        None
    }
}

impl<D: MarkovDriver + ?Sized> MarkovDriver for &D {
    fn evaluate(&self, t: f64, state: usize, y: f64, z: &DVector<f64>) -> f64 {
        (**self).evaluate(t, state, y, z)
    }
    fn lipschitz_y(&self) -> f64 {
        (**self).lipschitz_y()
    }
    fn lipschitz_z(&self) -> f64 {
        (**self).lipschitz_z()
    }
    fn partials(&self, t: f64, state: usize, y: f64, z: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        (**self).partials(t, state, y, z)
    }
}

impl<D: MarkovDriver + ?Sized> MarkovDriver for Box<D> {
    fn evaluate(&self, t: f64, state: usize, y: f64, z: &DVector<f64>) -> f64 {
        (**self).evaluate(t, state, y, z)
    }
    fn lipschitz_y(&self) -> f64 {
        (**self).lipschitz_y()
    }
    fn lipschitz_z(&self) -> f64 {
        (**self).lipschitz_z()
    }
    fn partials(&self, t: f64, state: usize, y: f64, z: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        (**self).partials(t, state, y, z)
    }
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDriver;

impl MarkovDriver for ZeroDriver {
    fn evaluate(&self, _: f64, _: usize, _: f64, _: &DVector<f64>) -> f64 {
        0.0
    }
    fn lipschitz_y(&self) -> f64 {
        0.0
    }
    fn lipschitz_z(&self) -> f64 {
        0.0
    }
    fn partials(&self, _: f64, _: usize, _: f64, z: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        Some((0.0, DVector::zeros(z.len())))
    }
}

/// Plain discounting `f = −r·y`.
#[derive(Debug, Clone, Copy)]
pub struct DiscountDriver {
    pub rate: f64,
}

impl MarkovDriver for DiscountDriver {
    fn evaluate(&self, _: f64, _: usize, y: f64, _: &DVector<f64>) -> f64 {
        -self.rate * y
    }
    fn lipschitz_y(&self) -> f64 {
        self.rate.abs()
    }
    fn lipschitz_z(&self) -> f64 {
        0.0
    }
    fn partials(&self, _: f64, _: usize, _: f64, z: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        Some((-self.rate, DVector::zeros(z.len())))
    }
}

/// State-dependent affine driver `f = slope_i·y + offset_i`.
#[derive(Debug, Clone)]
pub struct AffineInStateDriver {
    pub slope: DVector<f64>,
    pub offset: DVector<f64>,
}

impl MarkovDriver for AffineInStateDriver {
    fn evaluate(&self, _: f64, state: usize, y: f64, _: &DVector<f64>) -> f64 {
        self.slope[state] * y + self.offset[state]
    }
    fn lipschitz_y(&self) -> f64 {
        self.slope.amax()
    }
    fn lipschitz_z(&self) -> f64 {
        0.0
    }
    fn partials(&self, _: f64, state: usize, _: f64, z: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        Some((self.slope[state], DVector::zeros(z.len())))
    }
}

/// Closure-backed driver with caller-supplied Lipschitz constants.
pub struct FnDriver<F> {
    pub f: F,
    pub lipschitz_y: f64,
    pub lipschitz_z: f64,
}

impl<F> FnDriver<F>
where
    F: Fn(f64, usize, f64, &DVector<f64>) -> f64 + Send + Sync,
{
    pub fn new(lipschitz_y: f64, lipschitz_z: f64, f: F) -> Self {
        Self { f, lipschitz_y, lipschitz_z }
    }
}

impl<F> MarkovDriver for FnDriver<F>
where
    F: Fn(f64, usize, f64, &DVector<f64>) -> f64 + Send + Sync,
{
    fn evaluate(&self, t: f64, state: usize, y: f64, z: &DVector<f64>) -> f64 {
        (self.f)(t, state, y, z)
    }
    fn lipschitz_y(&self) -> f64 {
        self.lipschitz_y
    }
    fn lipschitz_z(&self) -> f64 {
        self.lipschitz_z
    }
}

/// Largest observed `|Δf| − (l₁|Δy| + l₂‖Δz‖_X)` over random quadruples;
/// nonpositive when the declared constants hold on the sample.
pub fn lipschitz_spot_check(spec: &ChainSpec, driver: &dyn MarkovDriver, samples: usize, seed: u64) -> f64 {
    let n = spec.n_states();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let t = rng.gen::<f64>() * spec.horizon();
        let i = rng.gen_range(0..n);
        let y1 = rng.gen_range(-10.0..10.0);
        let y2 = rng.gen_range(-10.0..10.0);
        let z1 = DVector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0));
        let z2 = DVector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0));
        let psi = crate::chain::psi_from_generator(spec.generator_at(t), i);
        let dz = &z1 - &z2;
        let semi = dz.dot(&(&psi * &dz)).max(0.0).sqrt();
        let lhs = (driver.evaluate(t, i, y1, &z1) - driver.evaluate(t, i, y2, &z2)).abs();
        let rhs = driver.lipschitz_y() * (y1 - y2).abs() + driver.lipschitz_z() * semi;
        worst = worst.max(lhs - rhs);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ExplicitRk4,
    ImplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub steps: usize,
    pub scheme: Scheme,
    /// Fail with [`Error::ContractionViolated`] instead of logging a warning.
    pub strict_contraction: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { steps: 1000, scheme: Scheme::ExplicitRk4, strict_contraction: false }
    }
}

impl SolveOptions {
    pub fn new(steps: usize, scheme: Scheme) -> Self {
        Self { steps, scheme, strict_contraction: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsdeSolution {
    /// `y(t)`: `Y_t = y(t)'X_t` and `Z_t = y(t)`.
    pub y: StateGridFunction,
    pub scheme: Scheme,
    pub steps: usize,
}

impl BsdeSolution {
    /// `Y_0` for a chain started in `state`.
    pub fn initial_value(&self, state: usize) -> f64 {
        self.y.at(0, state)
    }
}

/// Right-hand side `−A'y − f(t, ·, y_·, y)` of the backward system.
pub(crate) fn backward_rhs(t: f64, y: &DVector<f64>, gen: &DMatrix<f64>, driver: &dyn MarkovDriver) -> DVector<f64> {
    let mut out = -(gen.tr_mul(y));
    for i in 0..y.len() {
        out[i] -= driver.evaluate(t, i, y[i], y);
    }
    out
}

/// Jacobian of `x ↦ (f(t, i, x_i, x))_i`.
fn driver_jacobian(t: f64, x: &DVector<f64>, driver: &dyn MarkovDriver) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        if let Some((dy, dz)) = driver.partials(t, i, x[i], x) {
            jac.row_mut(i).copy_from(&dz.transpose());
            jac[(i, i)] += dy;
            continue;
        }
        let base = driver.evaluate(t, i, x[i], x);
        let mut probe = x.clone();
        for k in 0..n {
            let h = 1e-7 * x[k].abs().max(1.0);
            probe[k] = x[k] + h;
            jac[(i, k)] = (driver.evaluate(t, i, probe[i], &probe) - base) / h;
            probe[k] = x[k];
        }
    }
    jac
}

/// Finite-difference partials of a driver, for wrappers that know only part
/// of their derivative in closed form.
pub(crate) fn fd_partials(driver: &dyn MarkovDriver, t: f64, state: usize, y: f64, z: &DVector<f64>) -> (f64, DVector<f64>) {
    if let Some(p) = driver.partials(t, state, y, z) {
        return p;
    }
    let base = driver.evaluate(t, state, y, z);
    let hy = 1e-7 * y.abs().max(1.0);
    let dy = (driver.evaluate(t, state, y + hy, z) - base) / hy;
    let mut probe = z.clone();
    let dz = DVector::from_fn(z.len(), |k, _| {
        let h = 1e-7 * z[k].abs().max(1.0);
        probe[k] = z[k] + h;
        let d = (driver.evaluate(t, state, y, &probe) - base) / h;
        probe[k] = z[k];
        d
    });
    (dy, dz)
}

fn rk4_step(hi: f64, lo: f64, y: &DVector<f64>, gen: &DMatrix<f64>, driver: &dyn MarkovDriver) -> DVector<f64> {
    let h = lo - hi;
    let k1 = backward_rhs(hi, y, gen, driver);
    let k2 = backward_rhs(hi + 0.5 * h, &(y + &k1 * (0.5 * h)), gen, driver);
    let k3 = backward_rhs(hi + 0.5 * h, &(y + &k2 * (0.5 * h)), gen, driver);
    let k4 = backward_rhs(lo, &(y + &k3 * h), gen, driver);
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Solves `x = y_next + Δ·[A'x + f(lo, x)]` by Newton's method.
fn implicit_euler_step(
    hi: f64,
    lo: f64,
    y_next: &DVector<f64>,
    gen: &DMatrix<f64>,
    driver: &dyn MarkovDriver,
) -> Result<DVector<f64>> {
    let n = y_next.len();
    let dt = hi - lo;
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let mut r = x - y_next - gen.tr_mul(x) * dt;
        for i in 0..n {
            r[i] -= dt * driver.evaluate(lo, i, x[i], x);
        }
        r
    };
    let mut x = y_next.clone();
    for _ in 0..100 {
        let r = residual(&x);
        let jac = DMatrix::identity(n, n) - (gen.transpose() + driver_jacobian(lo, &x, driver)) * dt;
        let delta = jac
            .lu()
            .solve(&(-&r))
            .ok_or(Error::ImplicitSolve { time: lo })?;
        x += &delta;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { time: lo, state: 0 });
        }
        if delta.amax() <= 1e-14 * x.amax().max(1.0) {
            return Ok(x);
        }
    }
    Err(Error::ImplicitSolve { time: lo })
}

/// Integrates the backward system across `[lo, hi]`, splitting at generator breakpoints.
pub(crate) fn backward_step(
    spec: &ChainSpec,
    hi: f64,
    lo: f64,
    y_next: &DVector<f64>,
    driver: &dyn MarkovDriver,
    scheme: Scheme,
) -> Result<DVector<f64>> {
    let mut cuts: Vec<f64> = spec
        .schedule()
        .breakpoints()
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .collect();
    cuts.push(lo);
    let mut y = y_next.clone();
    let mut upper = hi;
    // walk the cuts from the top down
    cuts.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    for lower in cuts {
        let gen = spec.generator_at(0.5 * (lower + upper));
        y = match scheme {
            Scheme::ExplicitRk4 => rk4_step(upper, lower, &y, gen, driver),
            Scheme::ImplicitEuler => implicit_euler_step(upper, lower, &y, gen, driver)?,
        };
        upper = lower;
    }
    Ok(y)
}

pub(crate) fn enforce_contraction(spec: &ChainSpec, lipschitz_z: f64, steps: usize, strict: bool) -> Result<()> {
    let report = check_contraction(spec, lipschitz_z, steps)?;
    if !report.holds {
        if strict {
            return Err(Error::ContractionViolated {
                margin: report.worst_margin,
                time: report.worst_time,
                state: report.worst_state,
            });
        }
        log::warn!(
            "contraction condition fails (margin {:.3e} at t={}, state {})",
            report.worst_margin,
            report.worst_time,
            report.worst_state
        );
    }
    Ok(())
}

/// Solves the Markovian BSDE backward from `terminal` on a uniform grid.
pub fn solve_bsde(
    spec: &ChainSpec,
    driver: &dyn MarkovDriver,
    terminal: &DVector<f64>,
    opts: SolveOptions,
) -> Result<BsdeSolution> {
    let n = spec.n_states();
    if terminal.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "terminal has {} entries for {n} states",
            terminal.len()
        )));
    }
    if opts.steps < 2 {
        return Err(Error::PreconditionUnmet(format!("steps must be >= 2, got {}", opts.steps)));
    }
    enforce_contraction(spec, driver.lipschitz_z(), opts.steps, opts.strict_contraction)?;
    let grid = TimeGrid::new(spec.horizon(), opts.steps)?;
    let mut values = vec![DVector::zeros(n); grid.len()];
    values[grid.steps()] = terminal.clone();
    for k in (0..grid.steps()).rev() {
        let (lo, hi) = (grid.time(k), grid.time(k + 1));
        let y = backward_step(spec, hi, lo, &values[k + 1], driver, opts.scheme)?;
        if let Some(state) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { time: lo, state });
        }
        values[k] = y;
    }
    Ok(BsdeSolution { y: StateGridFunction { grid, values }, scheme: opts.scheme, steps: opts.steps })
}

/// Cubic Hermite interpolant of `y` on one grid step, using the ODE slopes.
struct StepInterpolant {
    lo: f64,
    h: f64,
    y_lo: DVector<f64>,
    y_hi: DVector<f64>,
    d_lo: DVector<f64>,
    d_hi: DVector<f64>,
}

impl StepInterpolant {
    fn at(&self, t: f64) -> DVector<f64> {
        let s = (t - self.lo) / self.h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &self.y_lo * h00 + &self.d_lo * (h10 * self.h) + &self.y_hi * h01 + &self.d_hi * (h11 * self.h)
    }
}

/// Max discrepancy over grid nodes between `Y_t` and
/// `ξ + ∫_t^T f du − ∫_t^T Z'dM` evaluated along a realized path.
///
/// `Z'dM` is the jump sum `Σ (y_j − y_i)` minus the compensator `∫ y'A X du`;
/// `dt` integrals use Simpson's rule on a Hermite interpolant of the grid
/// solution, split at jump times.
pub fn pathwise_residual(
    solution: &BsdeSolution,
    path: &ChainPath,
    spec: &ChainSpec,
    driver: &dyn MarkovDriver,
    terminal: &DVector<f64>,
) -> f64 {
    let grid = solution.y.grid;
    let values = &solution.y.values;
    let mut rhs = terminal[path.final_state()];
    let mut worst = (values[grid.steps()][path.final_state()] - rhs).abs();
    for k in (0..grid.steps()).rev() {
        let (lo, hi) = (grid.time(k), grid.time(k + 1));
        let gen = spec.generator_at(0.5 * (lo + hi));
        let interp = StepInterpolant {
            lo,
            h: hi - lo,
            d_lo: backward_rhs(lo, &values[k], gen, driver),
            d_hi: backward_rhs(hi, &values[k + 1], gen, driver),
            y_lo: values[k].clone(),
            y_hi: values[k + 1].clone(),
        };
        let integrand = |u: f64, state: usize| {
            let y = interp.at(u);
            let a = spec.generator_at(u.min(hi - 1e-15 * hi.max(1.0)).max(lo));
            driver.evaluate(u, state, y[state], &y) + a.column(state).dot(&y)
        };
        path.for_each_sojourn(lo, hi, |a, b, state| {
            spec.schedule().for_each_piece(a, b, |a, b, _| {
                let mid = 0.5 * (a + b);
                rhs += (b - a) / 6.0 * (integrand(a, state) + 4.0 * integrand(mid, state) + integrand(b, state));
            });
        });
        path.for_each_jump(lo, hi, |tau, from, to| {
            let y = interp.at(tau);
            let dy = y[to] - y[from];
            // Z'ΔX with Z = y(τ) and ΔX = e_to − e_from
            let mut dx = DVector::zeros(y.len());
            dx[to] = 1.0;
            dx[from] = -1.0;
            debug_assert!((y.dot(&dx) - dy).abs() <= 1e-12 * y.amax().max(1.0));
            rhs -= dy;
        });
        let lhs = values[k][path.state_at(lo)];
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub holds: bool,
    /// `max (y¹ − y²)⁺` over the grid.
    pub max_violation: f64,
}

const COMPARISON_TOL: f64 = 1e-9;

/// Solves both equations and checks `y¹ ≤ y²` on the grid.
///
/// Requires `ξ₁ ≤ ξ₂`, `f₁ ≤ f₂` on sampled points and along the second
/// solution, and the contraction condition for `f₁`.
pub fn comparison_check(
    spec: &ChainSpec,
    driver1: &dyn MarkovDriver,
    terminal1: &DVector<f64>,
    driver2: &dyn MarkovDriver,
    terminal2: &DVector<f64>,
    steps: usize,
) -> Result<ComparisonReport> {
    let n = spec.n_states();
    if terminal1.len() != n || terminal2.len() != n {
        return Err(Error::DimensionMismatch("terminal vectors must have one entry per state".into()));
    }
    if let Some(i) = (0..n).find(|&i| terminal1[i] > terminal2[i]) {
        return Err(Error::PreconditionUnmet(format!(
            "terminal1[{i}] = {} exceeds terminal2[{i}] = {}",
            terminal1[i], terminal2[i]
        )));
    }
    let contraction = check_contraction(spec, driver1.lipschitz_z(), steps)?;
    if !contraction.holds {
        return Err(Error::PreconditionUnmet(format!(
            "driver1 violates the contraction condition (margin {:.3e})",
            contraction.worst_margin
        )));
    }
    let ordered = |t: f64, i: usize, y: f64, z: &DVector<f64>| -> Result<()> {
        let (a, b) = (driver1.evaluate(t, i, y, z), driver2.evaluate(t, i, y, z));
        if a > b + 1e-12 * a.abs().max(b.abs()).max(1.0) {
            return Err(Error::PreconditionUnmet(format!(
                "driver1 = {a} > driver2 = {b} at t={t}, state {i}"
            )));
        }
        Ok(())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..256 {
        let t = rng.gen::<f64>() * spec.horizon();
        let i = rng.gen_range(0..n);
        let y = rng.gen_range(-5.0..5.0);
        let z = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
        ordered(t, i, y, &z)?;
    }
    let opts = SolveOptions::new(steps, Scheme::ExplicitRk4);
    let second = solve_bsde(spec, driver2, terminal2, opts)?;
    for (k, y) in second.y.values.iter().enumerate() {
        let t = second.y.grid.time(k);
        for i in 0..n {
            ordered(t, i, y[i], y)?;
        }
    }
    let first = solve_bsde(spec, driver1, terminal1, opts)?;
    let max_violation = first
        .y
        .values
        .iter()
        .zip(&second.y.values)
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x - y))
        .fold(0.0, f64::max);
    Ok(ComparisonReport { holds: max_violation <= COMPARISON_TOL, max_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::simulate_path;

    fn sym2(rate: f64) -> ChainSpec {
        ChainSpec::constant(DMatrix::from_row_slice(2, 2, &[-rate, rate, rate, -rate]), 0, 1.0).unwrap()
    }

    #[test]
    fn constant_terminal_stays_constant() {
        let spec = sym2(1.3);
        let xi = DVector::from_element(2, 2.5);
        for scheme in [Scheme::ExplicitRk4, Scheme::ImplicitEuler] {
            let sol = solve_bsde(&spec, &ZeroDriver, &xi, SolveOptions::new(50, scheme)).unwrap();
            for v in &sol.y.values {
                assert!((v - &xi).amax() < 1e-13);
            }
        }
    }

    #[test]
    fn exponential_discount_closed_form() {
        let spec = sym2(1.0);
        let r = 0.05;
        let sol = solve_bsde(&spec, &DiscountDriver { rate: r }, &DVector::from_element(2, 1.0), SolveOptions::default())
            .unwrap();
        for (k, v) in sol.y.values.iter().enumerate() {
            let exact = (-r * (1.0 - sol.y.grid.time(k))).exp();
            assert!((v[0] - exact).abs() < 1e-8 && (v[1] - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn terminal_slice_is_exact() {
        let spec = sym2(2.0);
        let xi = DVector::from_vec(vec![0.1 + 0.2, 1.0 / 3.0]);
        let sol = solve_bsde(&spec, &DiscountDriver { rate: 0.3 }, &xi, SolveOptions::new(7, Scheme::ImplicitEuler))
            .unwrap();
        assert_eq!(sol.y.terminal(), &xi);
    }

    #[test]
    fn rejects_too_few_steps_and_bad_dimensions() {
        let spec = sym2(1.0);
        let xi = DVector::from_element(2, 1.0);
        assert!(matches!(
            solve_bsde(&spec, &ZeroDriver, &xi, SolveOptions::new(1, Scheme::ExplicitRk4)),
            Err(Error::PreconditionUnmet(_))
        ));
        assert!(matches!(
            solve_bsde(&spec, &ZeroDriver, &DVector::from_element(3, 1.0), SolveOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn strict_contraction_rejects_steep_driver() {
        let spec = sym2(1.0);
        let steep = FnDriver::new(0.0, 1.0, |_, _, _, _: &DVector<f64>| 0.0);
        let opts = SolveOptions { strict_contraction: true, ..SolveOptions::new(10, Scheme::ExplicitRk4) };
        assert!(matches!(
            solve_bsde(&spec, &steep, &DVector::zeros(2), opts),
            Err(Error::ContractionViolated { .. })
        ));
        // warn-only by default
        assert!(solve_bsde(&spec, &steep, &DVector::zeros(2), SolveOptions::new(10, Scheme::ExplicitRk4)).is_ok());
    }

    #[test]
    fn blow_up_is_reported() {
        let spec = sym2(1.0);
        let wild = FnDriver::new(0.0, 0.0, |_, _, y: f64, _: &DVector<f64>| -y.abs().powi(3) - 1.0);
        let err = solve_bsde(&spec, &wild, &DVector::from_element(2, 10.0), SolveOptions::new(20, Scheme::ExplicitRk4))
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
    }

    #[test]
    fn constant_solution_has_zero_residual() {
        let spec = sym2(1.0);
        let xi = DVector::from_element(2, -4.0);
        let sol = solve_bsde(&spec, &ZeroDriver, &xi, SolveOptions::new(100, Scheme::ExplicitRk4)).unwrap();
        for seed in 0..20 {
            let path = simulate_path(&spec, seed);
            assert!(pathwise_residual(&sol, &path, &spec, &ZeroDriver, &xi) < 1e-12);
        }
    }

    #[test]
    fn spot_check_accepts_declared_constants() {
        let spec = sym2(1.0);
        assert!(lipschitz_spot_check(&spec, &DiscountDriver { rate: 0.2 }, 500, 3) <= 1e-12);
        let liar = FnDriver::new(0.0, 0.0, |_, _, y: f64, _: &DVector<f64>| y);
        assert!(lipschitz_spot_check(&spec, &liar, 100, 3) > 0.0);
    }

    #[test]
    fn comparison_rejects_unordered_terminals() {
        let spec = sym2(1.0);
        let err = comparison_check(
            &spec,
            &ZeroDriver,
            &DVector::from_element(2, 1.0),
            &ZeroDriver,
            &DVector::from_element(2, 0.0),
            50,
        )
        .unwrap_err();
        assert!(matches!(err, Error::PreconditionUnmet(_)));
    }
}
