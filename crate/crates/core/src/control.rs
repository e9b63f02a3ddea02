//! Piecewise-constant control inputs `(u1, u2, u3) = (vx, vy, k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-channel box `lower[i] <= u_i <= upper[i]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl ControlBounds {
    pub fn new(lower: [f64; 3], upper: [f64; 3]) -> Result<Self> {
        for c in 0..3 {
            if !(lower[c].is_finite() && upper[c].is_finite()) || lower[c] > upper[c] {
                return Err(Error::invalid(format!(
                    "channel {c}: bounds [{}, {}] are not a finite interval",
                    lower[c], upper[c]
                )));
            }
        }
        if lower[2] < 0.0 {
            return Err(Error::invalid("activity rate lower bound must be >= 0"));
        }
        Ok(ControlBounds { lower, upper })
    }

    /// `|vx|, |vy| <= vmax` and `0 <= k <= kmax`.
    pub fn symmetric(vmax: f64, kmax: f64) -> Result<Self> {
        Self::new([-vmax, -vmax, 0.0], [vmax, vmax, kmax])
    }

    pub fn max_abs(&self, channel: usize) -> f64 {
        self.lower[channel].abs().max(self.upper[channel].abs())
    }

    pub fn clamp(&self, u: [f64; 3]) -> [f64; 3] {
        let mut out = u;
        for c in 0..3 {
            out[c] = u[c].clamp(self.lower[c], self.upper[c]);
        }
        out
    }

    pub fn contains(&self, u: [f64; 3]) -> bool {
        (0..3).all(|c| u[c] >= self.lower[c] && u[c] <= self.upper[c])
    }
}

/// Control held constant on each interval `[breaks[m], breaks[m+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    breaks: Vec<f64>,
    values: Vec<[f64; 3]>,
    bounds: ControlBounds,
}

impl ControlSignal {
    pub fn new(breaks: Vec<f64>, values: Vec<[f64; 3]>, bounds: ControlBounds) -> Result<Self> {
        if breaks.len() < 2 || values.len() + 1 != breaks.len() {
            return Err(Error::invalid(format!("{} breakpoints cannot hold {} intervals", breaks.len(), values.len())));
        }
        if breaks[0] != 0.0 {
            return Err(Error::invalid("control time grid must start at 0"));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || !breaks[breaks.len() - 1].is_finite() {
            return Err(Error::invalid("control breakpoints must be strictly increasing"));
        }
        if let Some((m, u)) = values.iter().enumerate().find(|(_, u)| !bounds.contains(**u)) {
            return Err(Error::invalid(format!("interval {m}: control {u:?} violates bounds")));
        }
        Ok(ControlSignal { breaks, values, bounds })
    }

    /// `intervals` equal intervals over `[0, horizon]`, all set to `value`.
    pub fn uniform(horizon: f64, intervals: usize, value: [f64; 3], bounds: ControlBounds) -> Result<Self> {
        if intervals == 0 || !(horizon > 0.0) {
            return Err(Error::invalid("need a positive horizon and at least one interval"));
        }
        let breaks = (0..=intervals).map(|m| horizon * m as f64 / intervals as f64).collect();
        Self::new(breaks, vec![value; intervals], bounds)
    }

    pub fn horizon(&self) -> f64 {
        self.breaks[self.breaks.len() - 1]
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    pub fn bounds(&self) -> &ControlBounds {
        &self.bounds
    }

    pub fn interval_len(&self, m: usize) -> f64 {
        self.breaks[m + 1] - self.breaks[m]
    }

    /// Interval containing `t`; `t >= horizon` maps to the last interval.
    pub fn interval_at(&self, t: f64) -> usize {
        match self.breaks.partition_point(|&b| b <= t) {
            0 => 0,
            k => (k - 1).min(self.values.len() - 1),
        }
    }

    pub fn at(&self, t: f64) -> [f64; 3] {
        self.values[self.interval_at(t)]
    }

    /// Same time grid, new values; the values are not projected.
    pub fn with_values(&self, values: Vec<[f64; 3]>) -> Result<Self> {
        Self::new(self.breaks.clone(), values, self.bounds)
    }

    /// Same values under different bounds (values must satisfy them).
    pub fn with_bounds(&self, bounds: ControlBounds) -> Result<Self> {
        Self::new(self.breaks.clone(), self.values.clone(), bounds)
    }

    /// `<self, other>` in `L2(0,T)^3`, treating `other` as a per-interval
    /// direction on the same time grid.
    pub fn l2_dot(&self, other: &[[f64; 3]]) -> f64 {
        self.values
            .iter()
            .zip(other)
            .enumerate()
            .map(|(m, (a, b))| self.interval_len(m) * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]))
            .sum()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_dot(&self.values)
    }
}

/// Per-interval, per-channel clamp onto the admissible box.
pub fn project_controls(values: &[[f64; 3]], bounds: &ControlBounds) -> Vec<[f64; 3]> {
    values.iter().map(|u| bounds.clamp(*u)).collect()
}
