//! Seeded Monte Carlo over exact chain paths.
//!
//! Path `k` of a run uses seed `seed_base + k`; samples are produced in
//! parallel, collected in index order and summed pairwise, so estimates are
//! bitwise reproducible regardless of thread count.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::bsde::{solve_bsde, SolveOptions};
use crate::chain::{psi_from_generator, simulate_path, stochastic_integral_const, ChainPath, ChainSpec};
use crate::hedge::HedgeDriver;
use crate::market::{for_each_discounted_piece, log_sdf_increment, MarketSpec, StockCurves};
use crate::{Error, Result};

/// Statistical checks pass when the gap is within this many standard errors.
pub const PASS_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed_base: u64,
}

impl McEstimate {
    /// Sample mean and standard error; a non-finite sample is reported with
    /// the seed of its path.
    pub fn from_samples(samples: &[f64], seed_base: u64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::PreconditionUnmet(format!("need at least 2 paths, got {n}")));
        }
        if let Some(k) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample { seed: seed_base.wrapping_add(k as u64) });
        }
        let mean = pairwise_sum(samples) / n as f64;
        let squares: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let variance = pairwise_sum(&squares) / (n - 1) as f64;
        Ok(Self { mean, std_error: (variance / n as f64).sqrt(), n_paths: n, seed_base })
    }

    /// `|mean − target| ≤ PASS_SIGMAS · std_error`.
    pub fn agrees_with(&self, target: f64) -> bool {
        (self.mean - target).abs() <= PASS_SIGMAS * self.std_error
    }
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Evaluates `functional` on `n_paths` seeded paths, in path order.
pub fn mc_samples<T, F>(spec: &ChainSpec, n_paths: usize, seed_base: u64, functional: F) -> Vec<T>
where
    T: Send,
    F: Fn(&ChainPath) -> T + Sync,
{
    (0..n_paths as u64)
        .into_par_iter()
        .map(|k| functional(&simulate_path(spec, seed_base.wrapping_add(k))))
        .collect()
}

pub fn mc_estimate<F>(spec: &ChainSpec, functional: F, n_paths: usize, seed_base: u64) -> Result<McEstimate>
where
    F: Fn(&ChainPath) -> f64 + Sync,
{
    McEstimate::from_samples(&mc_samples(spec, n_paths, seed_base, functional), seed_base)
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub std_error: f64,
    pub pass: bool,
}

impl CheckRow {
    /// Analytic `lhs` against a Monte Carlo `rhs`.
    pub fn statistical(name: impl Into<String>, lhs: f64, rhs: &McEstimate) -> Self {
        Self { name: name.into(), lhs, rhs: rhs.mean, std_error: rhs.std_error, pass: rhs.agrees_with(lhs) }
    }

    /// Deterministic comparison at an absolute tolerance.
    pub fn exact(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self { name: name.into(), lhs, rhs, std_error: 0.0, pass: (lhs - rhs).abs() <= tol }
    }

    /// A bound `lhs ≤ rhs`.
    pub fn bound(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, std_error: 0.0, pass: lhs <= rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsometryReport {
    /// `E[(∫Z'dM)²]`.
    pub lhs: McEstimate,
    /// `E[∫‖Z‖²_{X_u} du]`.
    pub rhs: McEstimate,
    /// Paired per-path difference `lhs − rhs`.
    pub difference: McEstimate,
    pub passes: bool,
}

/// `∫_0^T Z'Ψ_u Z du` along the path.
fn seminorm_integral(spec: &ChainSpec, path: &ChainPath, z: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    path.for_each_sojourn(0.0, spec.horizon(), |lo, hi, state| {
        spec.schedule().for_each_piece(lo, hi, |l, h, gen| {
            acc += (h - l) * z.dot(&(psi_from_generator(gen, state) * z));
        });
    });
    acc
}

/// Monte Carlo check of `E[(∫_0^T Z'dM)²] = E[∫_0^T ‖Z‖²_{X_u} du]` for constant `Z`.
pub fn isometry_check(spec: &ChainSpec, z: &DVector<f64>, n_paths: usize, seed_base: u64) -> Result<IsometryReport> {
    if z.len() != spec.n_states() {
        return Err(Error::DimensionMismatch(format!("Z has {} entries for {} states", z.len(), spec.n_states())));
    }
    let pairs = mc_samples(spec, n_paths, seed_base, |path| {
        let integral = stochastic_integral_const(spec, path, z, 0.0, spec.horizon());
        (integral * integral, seminorm_integral(spec, path, z))
    });
    let lhs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rhs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let difference = McEstimate::from_samples(&diff, seed_base)?;
    let rhs = McEstimate::from_samples(&rhs, seed_base)?;
    Ok(IsometryReport {
        lhs: McEstimate::from_samples(&lhs, seed_base)?,
        // a constant Z leaves only rounding on both sides
        passes: difference.agrees_with(0.0) || difference.mean.abs() <= 1e-12 * (1.0 + rhs.mean.abs()),
        rhs,
        difference,
    })
}

/// Value at time 0 of the European claim `ξ'X_T` from the BSDE under the
/// hedging driver, against the Monte Carlo estimate of `E[π_T ξ'X_T]`.
pub fn european_consistency(
    market: &MarketSpec,
    claim: &DVector<f64>,
    n_paths: usize,
    steps: usize,
    seed_base: u64,
) -> Result<CheckRow> {
    let driver = HedgeDriver::new(market);
    let solution = solve_bsde(market.chain(), &driver, claim, SolveOptions::new(steps, Default::default()))?;
    let horizon = market.horizon();
    let estimate = mc_estimate(
        market.chain(),
        |path| log_sdf_increment(market, path, 0.0, horizon).exp() * claim[path.final_state()],
        n_paths,
        seed_base,
    )?;
    Ok(CheckRow::statistical(
        "european_consistency",
        solution.initial_value(market.chain().initial_state()),
        &estimate,
    ))
}

/// `∫_0^T π_u δ'X_u du` along the path.
pub fn discounted_dividends(market: &MarketSpec, path: &ChainPath, dividend: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for_each_discounted_piece(market, path, |lo, hi, state, reg, pi_lo| {
        let d = reg.d[state];
        let tau = hi - lo;
        let weight = if d == 0.0 { tau } else { -(-d * tau).exp_m1() / d };
        acc += pi_lo * dividend[state] * weight;
    });
    acc
}

/// `S_0 = E[π_T S_T + ∫_0^T π_u δ'X_u du]` for one stock.
pub fn deflated_gains_check(
    market: &MarketSpec,
    curves: &StockCurves,
    stock: usize,
    n_paths: usize,
    seed_base: u64,
) -> Result<CheckRow> {
    if stock >= curves.n_stocks() {
        return Err(Error::DimensionMismatch(format!("stock {stock} of {}", curves.n_stocks())));
    }
    let horizon = market.horizon();
    let last = curves.grid.steps();
    let dividend = &market.dividends()[stock];
    let estimate = mc_estimate(
        market.chain(),
        |path| {
            let pi_t = log_sdf_increment(market, path, 0.0, horizon).exp();
            pi_t * curves.price(stock, last, path.final_state()) + discounted_dividends(market, path, dividend)
        },
        n_paths,
        seed_base,
    )?;
    Ok(CheckRow::statistical(
        format!("deflated_gains_stock_{stock}"),
        curves.price(stock, 0, market.chain().initial_state()),
        &estimate,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn sym2() -> ChainSpec {
        ChainSpec::constant(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]), 0, 1.0).unwrap()
    }

    #[test]
    fn constant_functional_has_zero_error() {
        let est = mc_estimate(&sym2(), |_| 1.0, 100, 7).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn estimates_are_reproducible() {
        let f = |p: &ChainPath| p.n_jumps() as f64;
        assert_eq!(mc_estimate(&sym2(), f, 2000, 11).unwrap(), mc_estimate(&sym2(), f, 2000, 11).unwrap());
    }

    #[test]
    fn non_finite_sample_names_its_seed() {
        let err = mc_estimate(&sym2(), |p| if p.seed == 105 { f64::NAN } else { 0.0 }, 10, 100).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample { seed: 105 }));
    }

    #[test]
    fn pairwise_matches_naive_sum() {
        let xs: Vec<f64> = (0..1000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn isometry_null_direction() {
        let report = isometry_check(&sym2(), &DVector::from_element(2, 3.0), 200, 1).unwrap();
        assert!(report.lhs.mean.abs() < 1e-20 && report.rhs.mean == 0.0 && report.passes);
    }
}
