use crate::{Error, Result};

/// A piecewise-constant function of time on `[0, T]`.
///
/// Piece `k` is active on `[start_k, start_{k+1})`; the last piece is active up
/// to the horizon and is also used beyond it.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T> {
    starts: Vec<f64>,
    values: Vec<T>,
    horizon: f64,
}

impl<T> Schedule<T> {
    pub fn new(pieces: Vec<(f64, T)>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::BadSchedule(format!("horizon must be positive, got {horizon}")));
        }
        if pieces.is_empty() {
            return Err(Error::BadSchedule("empty schedule".into()));
        }
        let (starts, values): (Vec<f64>, Vec<T>) = pieces.into_iter().unzip();
        if starts[0] != 0.0 {
            return Err(Error::BadSchedule(format!(
                "first piece must start at 0, got {} (gap)",
                starts[0]
            )));
        }
        for w in starts.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::BadSchedule(format!(
                    "piece starts must increase strictly ({} then {}: overlap)",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = starts.last() {
            if !(last < horizon) || !last.is_finite() {
                return Err(Error::BadSchedule(format!(
                    "piece start {last} is not inside [0, {horizon})"
                )));
            }
        }
        Ok(Self { starts, values, horizon })
    }

    pub fn constant(value: T, horizon: f64) -> Result<Self> {
        Self::new(vec![(0.0, value)], horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn index_at(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn at(&self, t: f64) -> &T {
        &self.values[self.index_at(t)]
    }

    /// Piece starts strictly inside `(0, T)`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.starts[1..]
    }

    /// Calls `f(lo, hi, value)` for every maximal constant piece of `[a, b]`.
    pub fn for_each_piece(&self, a: f64, b: f64, mut f: impl FnMut(f64, f64, &T)) {
        if !(b > a) {
            return;
        }
        let mut k = self.index_at(a);
        let mut lo = a;
        loop {
            let end = self.starts.get(k + 1).copied().unwrap_or(f64::INFINITY);
            if end >= b {
                f(lo, b, &self.values[k]);
                return;
            }
            f(lo, end, &self.values[k]);
            lo = end;
            k += 1;
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Schedule<U> {
        Schedule {
            starts: self.starts.clone(),
            values: self.values.iter().map(f).collect(),
            horizon: self.horizon,
        }
    }
}

/// Sorted union of the breakpoints of several schedules, restricted to `(a, b)`.
pub fn merged_breakpoints(lists: &[&[f64]], a: f64, b: f64) -> Vec<f64> {
    let mut out: Vec<f64> = lists
        .iter()
        .flat_map(|l| l.iter().copied())
        .filter(|&t| t > a && t < b)
        .collect();
    out.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_and_pieces() {
        let s = Schedule::new(vec![(0.0, 'a'), (0.5, 'b')], 1.0).unwrap();
        assert_eq!(*s.at(0.0), 'a');
        assert_eq!(*s.at(0.4999), 'a');
        assert_eq!(*s.at(0.5), 'b');
        assert_eq!(*s.at(3.0), 'b');
        let mut seen = vec![];
        s.for_each_piece(0.25, 0.75, |lo, hi, v| seen.push((lo, hi, *v)));
        assert_eq!(seen, vec![(0.25, 0.5, 'a'), (0.5, 0.75, 'b')]);
    }

    #[test]
    fn gaps_and_overlaps_rejected() {
        assert!(Schedule::new(vec![(0.1, 1)], 1.0).is_err());
        assert!(Schedule::new(vec![(0.0, 1), (0.5, 2), (0.5, 3)], 1.0).is_err());
        assert!(Schedule::new(vec![(0.0, 1), (1.0, 2)], 1.0).is_err());
    }
}
