//! Piecewise-constant velocity schedules, in particular the boustrophedon
//! ("lawnmower") sweep used for mapping.

use crate::control::{ControlBounds, ControlSignal};
use crate::error::{Error, Result};
use crate::grid::Rect;

/// Constant velocity held for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub vx: f64,
    pub vy: f64,
}

/// A sequence of velocity segments starting from a reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySchedule {
    start: (f64, f64),
    segments: Vec<Segment>,
}

impl VelocitySchedule {
    pub fn new(start: (f64, f64), segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("schedule has no segments"));
        }
        if let Some(s) = segments
            .iter()
            .find(|s| !(s.duration > 0.0 && s.duration.is_finite() && s.vx.is_finite() && s.vy.is_finite()))
        {
            return Err(Error::invalid(format!("bad segment {s:?}")));
        }
        Ok(VelocitySchedule { start, segments })
    }

    pub fn start(&self) -> (f64, f64) {
        self.start
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Largest speed along either axis.
    pub fn max_speed(&self) -> f64 {
        self.segments.iter().map(|s| s.vx.abs().max(s.vy.abs())).fold(0.0, f64::max)
    }

    /// Segment start times plus the horizon.
    pub fn breaks(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = vec![0.0];
        for s in &self.segments {
            t += s.duration;
            out.push(t);
        }
        let n = out.len();
        out[n - 1] = self.horizon();
        out
    }

    /// Control signal with the velocity channels from the schedule and the
    /// activity channel frozen at zero. The velocity bounds are the
    /// schedule's own peak speed.
    pub fn to_control(&self) -> Result<ControlSignal> {
        let v = self.max_speed();
        let bounds = ControlBounds::new([-v, -v, 0.0], [v, v, 0.0])?;
        let values = self.segments.iter().map(|s| [s.vx, s.vy, 0.0]).collect();
        ControlSignal::new(self.breaks(), values, bounds)
    }

    /// Drift-only position at time `t` (no walls).
    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let (mut x, mut y) = self.start;
        let mut elapsed = 0.0;
        for s in &self.segments {
            let dt = s.duration.min(t - elapsed);
            if dt <= 0.0 {
                break;
            }
            x += s.vx * dt;
            y += s.vy * dt;
            elapsed += s.duration;
        }
        (x, y)
    }
}

/// Total path length of a lawnmower sweep with `lanes` horizontal passes.
pub fn lawnmower_length(domain: &Rect, lanes: usize) -> f64 {
    let hop = domain.height() / lanes as f64;
    lanes as f64 * domain.width() + (lanes as f64 - 1.0) * hop
}

/// Boustrophedon sweep: `lanes` horizontal passes across the full width,
/// joined by vertical hops of `height / lanes`, starting at the left wall in
/// the middle of the lowest lane. The sweep is slowed uniformly so that it
/// ends exactly at `horizon`; `speed` is the fastest the agents may travel.
pub fn make_lawnmower(domain: &Rect, lanes: usize, speed: f64, horizon: f64) -> Result<VelocitySchedule> {
    if lanes == 0 {
        return Err(Error::invalid("lawnmower needs at least one lane"));
    }
    if !(speed > 0.0) || !(horizon > 0.0) {
        return Err(Error::invalid("lawnmower speed and horizon must be positive"));
    }
    let length = lawnmower_length(domain, lanes);
    if speed * horizon < length {
        return Err(Error::invalid(format!(
            "a {lanes}-lane sweep is {length} m long; finishing by t = {horizon} s needs speed >= {} m/s, got {speed}",
            length / horizon
        )));
    }
    let v = length / horizon;
    let hop = domain.height() / lanes as f64;
    let mut segments = Vec::with_capacity(2 * lanes - 1);
    for lane in 0..lanes {
        let dir = if lane % 2 == 0 { 1.0 } else { -1.0 };
        segments.push(Segment { duration: domain.width() / v, vx: dir * v, vy: 0.0 });
        if lane + 1 < lanes {
            segments.push(Segment { duration: hop / v, vx: 0.0, vy: v });
        }
    }
    VelocitySchedule::new((domain.x_lo, domain.y_lo + 0.5 * hop), segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Rect {
        Rect::new(0.0, 100.0, 0.0, 100.0)
    }

    #[test]
    fn four_lane_length() {
        assert_eq!(lawnmower_length(&square(), 4), 475.0);
        assert!(make_lawnmower(&square(), 4, 1.0, 474.0).is_err());
        let s = make_lawnmower(&square(), 4, 1.0, 475.0).unwrap();
        assert!((s.horizon() - 475.0).abs() < 1e-12);
        assert_eq!(s.segments().len(), 7);
    }

    #[test]
    fn single_lane_is_one_sweep() {
        let s = make_lawnmower(&square(), 1, 2.0, 100.0).unwrap();
        assert_eq!(s.segments().len(), 1);
        assert_eq!(s.segments()[0].vx * s.segments()[0].duration, 100.0);
        assert_eq!(s.start(), (0.0, 50.0));
    }

    #[test]
    fn error_names_minimum_speed() {
        let err = make_lawnmower(&square(), 4, 0.5, 475.0).unwrap_err().to_string();
        assert!(err.contains("speed >= 1 m/s"), "{err}");
    }

    #[test]
    fn control_signal_matches_segments() {
        let s = make_lawnmower(&square(), 3, 5.0, 400.0).unwrap();
        let u = s.to_control().unwrap();
        assert_eq!(u.intervals(), 5);
        assert!((u.horizon() - 400.0).abs() < 1e-9);
        assert_eq!(u.values()[1][0], 0.0);
        assert!(u.values()[1][1] > 0.0);
        assert!(u.values()[2][0] < 0.0);
    }
}
