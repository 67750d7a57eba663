//! Finite-state Markov chain `dX = A X dt + dM` in the column convention.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::linalg::{frobenius, pseudoinverse, DEFAULT_PINV_TOL};
use crate::schedule::Schedule;
use crate::{Error, Result, TimeGrid};

/// Absolute tolerance on generator column sums (scaled by the column size).
pub const GENERATOR_TOL: f64 = 1e-12;

/// A validated chain: state count, piecewise-constant generator, initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    n_states: usize,
    generator: Schedule<DMatrix<f64>>,
    initial_state: usize,
}

/// Validates a generator schedule and initial state.
///
/// `schedule` holds `(start time, A)` pairs; `A[(i, j)]` is the rate `j → i`.
pub fn build_chain_spec(
    n_states: usize,
    schedule: Vec<(f64, DMatrix<f64>)>,
    initial_state: usize,
    horizon: f64,
) -> Result<ChainSpec> {
    if n_states == 0 {
        return Err(Error::BadState { state: initial_state, n_states });
    }
    if initial_state >= n_states {
        return Err(Error::BadState { state: initial_state, n_states });
    }
    for (piece, (_, a)) in schedule.iter().enumerate() {
        validate_generator(a, n_states).map_err(|detail| Error::NonGenerator { piece, detail })?;
    }
    let generator = Schedule::new(schedule, horizon)?;
    Ok(ChainSpec { n_states, generator, initial_state })
}

fn validate_generator(a: &DMatrix<f64>, n: usize) -> std::result::Result<(), String> {
    if a.nrows() != n || a.ncols() != n {
        return Err(format!("expected {n}x{n}, got {}x{}", a.nrows(), a.ncols()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err("non-finite entry".into());
    }
    for j in 0..n {
        let mut sum = 0.0;
        let mut scale: f64 = 1.0;
        for i in 0..n {
            let v = a[(i, j)];
            if i != j && v < 0.0 {
                return Err(format!("negative off-diagonal rate A[{i},{j}] = {v}"));
            }
            sum += v;
            scale = scale.max(v.abs());
        }
        if sum.abs() > GENERATOR_TOL * scale {
            return Err(format!("column {j} sums to {sum}, not 0"));
        }
    }
    Ok(())
}

impl ChainSpec {
    /// Time-homogeneous chain.
    pub fn constant(a: DMatrix<f64>, initial_state: usize, horizon: f64) -> Result<Self> {
        let n = a.nrows();
        build_chain_spec(n, vec![(0.0, a)], initial_state, horizon)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn horizon(&self) -> f64 {
        self.generator.horizon()
    }

    pub fn schedule(&self) -> &Schedule<DMatrix<f64>> {
        &self.generator
    }

    pub fn generator_at(&self, t: f64) -> &DMatrix<f64> {
        self.generator.at(t)
    }

    pub fn with_initial_state(&self, state: usize) -> Result<Self> {
        if state >= self.n_states {
            return Err(Error::BadState { state, n_states: self.n_states });
        }
        Ok(Self { initial_state: state, ..self.clone() })
    }

    /// Same chain with every generator multiplied by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { generator: self.generator.map(|a| a * factor), ..self.clone() }
    }
}

/// `m = max_k ‖A_k‖_F` over the schedule.
pub fn rate_bound_m(spec: &ChainSpec) -> f64 {
    spec.generator.values().iter().map(frobenius).fold(0.0, f64::max)
}

/// One realized trajectory of the chain on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    pub horizon: f64,
    pub seed: u64,
}

impl ChainPath {
    /// Path that never leaves `state`.
    pub fn constant(state: usize, horizon: f64) -> Self {
        Self { jump_times: vec![], states: vec![state], horizon, seed: 0 }
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn initial_state(&self) -> usize {
        self.states[0]
    }

    pub fn final_state(&self) -> usize {
        *self.states.last().expect("path has an initial state")
    }

    /// `X_t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        self.states[self.jump_times.partition_point(|&s| s <= t)]
    }

    /// `X_{t-}`.
    pub fn state_before(&self, t: f64) -> usize {
        self.states[self.jump_times.partition_point(|&s| s < t)]
    }

    /// Calls `f(lo, hi, state)` for each sojourn of the path inside `[a, b]`.
    pub fn for_each_sojourn(&self, a: f64, b: f64, mut f: impl FnMut(f64, f64, usize)) {
        if !(b > a) {
            return;
        }
        let mut idx = self.jump_times.partition_point(|&s| s <= a);
        let mut lo = a;
        while idx < self.jump_times.len() && self.jump_times[idx] < b {
            let tau = self.jump_times[idx];
            f(lo, tau, self.states[idx]);
            lo = tau;
            idx += 1;
        }
        f(lo, b, self.states[idx]);
    }

    /// Calls `f(time, from, to)` for each jump in `(a, b]`.
    pub fn for_each_jump(&self, a: f64, b: f64, mut f: impl FnMut(f64, usize, usize)) {
        let start = self.jump_times.partition_point(|&s| s <= a);
        for k in start..self.jump_times.len() {
            let tau = self.jump_times[k];
            if tau > b {
                break;
            }
            f(tau, self.states[k], self.states[k + 1]);
        }
    }

    /// Rows `(jump_index, time, state)`; row 0 is the initial state at time 0.
    pub fn csv_rows(&self) -> Vec<(usize, f64, usize)> {
        std::iter::once(0.0)
            .chain(self.jump_times.iter().copied())
            .zip(&self.states)
            .enumerate()
            .map(|(k, (t, &s))| (k, t, s))
            .collect()
    }
}

/// Exact jump-chain simulation, deterministic in `seed`.
///
/// Holding times that cross a schedule boundary are discarded and redrawn
/// from the boundary with the next generator.
pub fn simulate_path(spec: &ChainSpec, seed: u64) -> ChainPath {
    let horizon = spec.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    let mut state = spec.initial_state;
    let mut jump_times = Vec::new();
    let mut states = vec![state];
    let starts = spec.generator.starts();
    while t < horizon {
        let k = spec.generator.index_at(t);
        let piece_end = starts.get(k + 1).copied().unwrap_or(horizon).min(horizon);
        let a = &spec.generator.values()[k];
        let exit_rate = -a[(state, state)];
        if exit_rate <= 0.0 {
            t = piece_end;
            continue;
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / exit_rate;
        if t + hold >= piece_end {
            t = piece_end;
            continue;
        }
        t += hold;
        let mut u = rng.gen::<f64>() * exit_rate;
        let mut next = state;
        for i in 0..spec.n_states {
            if i == state {
                continue;
            }
            let rate = a[(i, state)];
            if rate <= 0.0 {
                continue;
            }
            next = i;
            if u < rate {
                break;
            }
            u -= rate;
        }
        if next == state {
            continue;
        }
        state = next;
        jump_times.push(t);
        states.push(state);
    }
    ChainPath { jump_times, states, horizon, seed }
}

/// `∫_a^b A_u X_u du` along the path, exact for piecewise-constant `A`.
pub fn drift_integral(spec: &ChainSpec, path: &ChainPath, a: f64, b: f64) -> DVector<f64> {
    let mut acc = DVector::zeros(spec.n_states);
    path.for_each_sojourn(a, b, |lo, hi, state| {
        spec.generator.for_each_piece(lo, hi, |l, h, gen| {
            acc.axpy(h - l, &gen.column(state), 1.0);
        });
    });
    acc
}

/// `M_t = X_t − X_0 − ∫_0^t A_u X_u du` at every node of a uniform grid.
pub fn martingale_path(path: &ChainPath, spec: &ChainSpec, grid_steps: usize) -> Result<Vec<DVector<f64>>> {
    let grid = TimeGrid::new(spec.horizon(), grid_steps)?;
    let n = spec.n_states;
    let x0 = unit(n, path.initial_state());
    let mut drift = DVector::zeros(n);
    let mut out = Vec::with_capacity(grid.len());
    out.push(DVector::zeros(n));
    for k in 0..grid.steps() {
        let (a, b) = (grid.time(k), grid.time(k + 1));
        drift += drift_integral(spec, path, a, b);
        out.push(unit(n, path.state_at(b)) - &x0 - &drift);
    }
    Ok(out)
}

/// `∫_a^b z'dM` for a constant vector `z`: jump sum minus compensator.
pub fn stochastic_integral_const(spec: &ChainSpec, path: &ChainPath, z: &DVector<f64>, a: f64, b: f64) -> f64 {
    let mut jumps = 0.0;
    path.for_each_jump(a, b, |_, from, to| jumps += z[to] - z[from]);
    jumps - z.dot(&drift_integral(spec, path, a, b))
}

pub(crate) fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// Density of the predictable quadratic variation, `d⟨X,X⟩_t = Ψ_t dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiMatrix {
    pub matrix: DMatrix<f64>,
    pub state: usize,
    pub time: f64,
}

/// `Ψ = diag(A x) − diag(x) A' − A diag(x)` with `x = e_state`.
pub fn psi_from_generator(a: &DMatrix<f64>, state: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let x = unit(n, state);
    let ax = a * &x;
    let dx = DMatrix::from_diagonal(&x);
    DMatrix::from_diagonal(&ax) - &dx * a.transpose() - a * &dx
}

pub fn psi_matrix(spec: &ChainSpec, t: f64, state: usize) -> Result<PsiMatrix> {
    if state >= spec.n_states {
        return Err(Error::BadState { state, n_states: spec.n_states });
    }
    Ok(PsiMatrix { matrix: psi_from_generator(spec.generator_at(t), state), state, time: t })
}

/// `‖C‖²_{X_t} = C'Ψ_t C`.
pub fn seminorm_sq(c: &DVector<f64>, psi: &PsiMatrix) -> f64 {
    assert_eq!(c.len(), psi.matrix.nrows(), "seminorm dimension mismatch");
    c.dot(&(&psi.matrix * c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub holds: bool,
    /// `min 1 − l₂‖Ψ_t†‖_F √(6m)` over grid nodes and states.
    pub worst_margin: f64,
    pub worst_time: f64,
    pub worst_state: usize,
    pub m: f64,
    pub max_pinv_norm: f64,
}

/// Evaluates `l₂‖Ψ_t†‖_F √(6m) < 1` at every grid node and state.
pub fn check_contraction(spec: &ChainSpec, lipschitz_z: f64, grid_steps: usize) -> Result<ContractionReport> {
    if !(lipschitz_z >= 0.0) {
        return Err(Error::PreconditionUnmet(format!("lipschitz_z must be >= 0, got {lipschitz_z}")));
    }
    let grid = TimeGrid::new(spec.horizon(), grid_steps)?;
    let m = rate_bound_m(spec);
    let root = (6.0 * m).sqrt();
    // Ψ† only changes with the schedule piece, so cache per piece
    let per_piece: Vec<Vec<f64>> = spec
        .generator
        .values()
        .iter()
        .map(|a| {
            (0..spec.n_states)
                .map(|i| frobenius(&pseudoinverse(&psi_from_generator(a, i), DEFAULT_PINV_TOL)))
                .collect()
        })
        .collect();
    let mut report = ContractionReport {
        holds: true,
        worst_margin: f64::INFINITY,
        worst_time: 0.0,
        worst_state: 0,
        m,
        max_pinv_norm: 0.0,
    };
    for t in grid.times() {
        let norms = &per_piece[spec.generator.index_at(t)];
        for (i, &norm) in norms.iter().enumerate() {
            let margin = 1.0 - lipschitz_z * norm * root;
            report.max_pinv_norm = report.max_pinv_norm.max(norm);
            if margin < report.worst_margin {
                report.worst_margin = margin;
                report.worst_time = t;
                report.worst_state = i;
            }
        }
    }
    report.holds = report.worst_margin > 0.0;
    Ok(report)
}
