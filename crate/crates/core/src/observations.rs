//! Cumulative observation counts over time.

use crate::error::{Error, Result};

/// Cumulative observations `g(t)` (per unit of initial mass) sampled at
/// nondecreasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ObservationSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::invalid(format!("{} times for {} values", times.len(), values.len())));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation series must be finite"));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("observation times must be nondecreasing"));
        }
        Ok(ObservationSeries { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Piecewise-linear interpolation, held constant outside the samples.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0];
        }
        if k == self.times.len() {
            return self.last_value();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (g0, g1) = (self.values[k - 1], self.values[k]);
        if t1 == t0 {
            return g1;
        }
        g0 + (g1 - g0) * (t - t0) / (t1 - t0)
    }

    /// Average rate `(g(b) - g(a)) / (b - a)` over each window `[edges[j], edges[j+1]]`.
    pub fn window_rates(&self, edges: &[f64]) -> Vec<f64> {
        edges.windows(2).map(|w| (self.at(w[1]) - self.at(w[0])) / (w[1] - w[0])).collect()
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }
}
