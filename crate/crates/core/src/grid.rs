use nalgebra::DVector;

use crate::{Error, Result};

/// Uniform time grid `t_k = k·T/K`, `k = 0..=K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::BadSchedule(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::BadSchedule("grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node time; the last node is exactly the horizon.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon
        } else {
            self.horizon * (k as f64 / self.steps as f64)
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.time(k))
    }

    /// Index of the last node `t_k ≤ t` (clamped to the grid).
    pub fn node_at_or_before(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        let mut k = ((t / self.dt()).floor() as usize).min(self.steps);
        // division rounding can land one node off in either direction
        if self.time(k) > t && k > 0 {
            k -= 1;
        } else if k < self.steps && self.time(k + 1) <= t {
            k += 1;
        }
        k
    }
}

/// A function `[0, T] → ℝ^N` sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGridFunction {
    pub grid: TimeGrid,
    pub values: Vec<DVector<f64>>,
}

impl StateGridFunction {
    pub fn new(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let n = values[0].len();
        if values.iter().any(|v| v.len() != n) {
            return Err(Error::DimensionMismatch("ragged state vectors".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid, n_states: usize) -> Self {
        Self { grid, values: vec![DVector::zeros(n_states); grid.len()] }
    }

    pub fn from_fn(grid: TimeGrid, n_states: usize, mut f: impl FnMut(f64, usize) -> f64) -> Self {
        let values = grid
            .times()
            .map(|t| DVector::from_fn(n_states, |i, _| f(t, i)))
            .collect();
        Self { grid, values }
    }

    pub fn n_states(&self) -> usize {
        self.values[0].len()
    }

    pub fn at(&self, k: usize, state: usize) -> f64 {
        self.values[k][state]
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.values.last().expect("grid has at least two nodes")
    }

    /// Piecewise-linear interpolation in time of one state row.
    pub fn interpolate(&self, t: f64, state: usize) -> f64 {
        let k = self.grid.node_at_or_before(t);
        if k >= self.grid.steps() {
            return self.values[self.grid.steps()][state];
        }
        let t0 = self.grid.time(k);
        let w = ((t - t0) / self.grid.dt()).clamp(0.0, 1.0);
        (1.0 - w) * self.values[k][state] + w * self.values[k + 1][state]
    }

    /// Largest absolute entrywise difference to another function on the same grid.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}
