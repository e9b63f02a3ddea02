//! Explicit SSP-RK2 (Heun) time marching for the forward models.

use std::borrow::Cow;

use crate::control::{ControlBounds, ControlSignal};
use crate::error::{Error, Result};
use crate::grid::{Grid, IndicatorField, ScalarField};
use crate::observations::ObservationSeries;

use super::rhs::rhs_unchecked;
use super::{DensityTrajectory, Model, PhysicalParams, StateDensities};

/// Undershoots below this are clipped to zero after a step.
const CLIP_THRESHOLD: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Upper bound on the time step in seconds.
    pub dt_max: f64,
    /// Store `y1` every `history_stride` steps for the adjoint pass; the
    /// fields in between are interpolated linearly in time.
    pub history_stride: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { dt_max: 0.5, history_stride: 1 }
    }
}

/// Half the smallest of the advective, diffusive and reactive time scales,
/// capped at `dt_max`. Infinite scales (zero rates) are skipped.
pub fn stable_dt(bounds: &ControlBounds, params: &PhysicalParams, grid: &Grid, dt_max: f64) -> f64 {
    let h = grid.hx().min(grid.hy());
    let scales = [
        grid.hx() / bounds.max_abs(0),
        grid.hy() / bounds.max_abs(1),
        h * h / (4.0 * params.diffusion),
        1.0 / bounds.upper[2],
        1.0 / params.resume_rate,
    ];
    let m = scales.into_iter().filter(|s| s.is_finite()).fold(f64::INFINITY, f64::min);
    (0.5 * m).min(dt_max)
}

/// Largest step for which one forward-Euler stage keeps every density
/// nonnegative (limited upwind fluxes can double the outflow of a cell).
pub fn positivity_dt(bounds: &ControlBounds, params: &PhysicalParams, grid: &Grid) -> f64 {
    let (hx, hy) = (grid.hx(), grid.hy());
    let outflow = 2.0 * bounds.max_abs(0) / hx
        + 2.0 * bounds.max_abs(1) / hy
        + 2.0 * params.diffusion * (1.0 / (hx * hx) + 1.0 / (hy * hy))
        + bounds.upper[2];
    1.0 / outflow.max(params.resume_rate)
}

/// Step size used by the solvers: the tighter of [`stable_dt`] and
/// [`positivity_dt`]. Depends only on the bounds, never on the control
/// values, so perturbing a control does not change the time grid.
pub fn step_limit(bounds: &ControlBounds, params: &PhysicalParams, grid: &Grid, dt_max: f64) -> f64 {
    stable_dt(bounds, params, grid, dt_max).min(positivity_dt(bounds, params, grid))
}

/// Time nodes of a solve. Every control breakpoint and requested snapshot
/// time is a node; the gaps between them are split into equal steps.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TimeGrid {
    pub times: Vec<f64>,
    /// Control interval active on step `n` (from node `n` to `n + 1`).
    pub intervals: Vec<usize>,
}

impl TimeGrid {
    pub fn build(control: &ControlSignal, extra: &[f64], dt_limit: f64) -> TimeGrid {
        let horizon = control.horizon();
        let tol = 1e-9 * horizon.max(1.0);
        let mut points = control.breaks().to_vec();
        for &t in extra {
            if !points.iter().any(|&b| (b - t).abs() <= tol) {
                points.push(t);
            }
        }
        points.sort_by(f64::total_cmp);

        let mut times = vec![0.0];
        let mut intervals = Vec::new();
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = (((b - a) / dt_limit) - 1e-9).ceil().max(1.0) as usize;
            let m = control.interval_at(0.5 * (a + b));
            for k in 1..=n {
                times.push(if k == n { b } else { a + (b - a) * k as f64 / n as f64 });
                intervals.push(m);
            }
        }
        TimeGrid { times, intervals }
    }

    pub fn steps(&self) -> usize {
        self.intervals.len()
    }

    pub fn dt(&self, n: usize) -> f64 {
        self.times[n + 1] - self.times[n]
    }

    /// Node at time `t`, if there is one.
    pub fn node(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.times[self.times.len() - 1].max(1.0);
        let k = self.times.partition_point(|&s| s < t - tol);
        (k < self.times.len() && (self.times[k] - t).abs() <= tol).then_some(k)
    }
}

/// Runs Heun steps, calling `on_step(n, start, predictor, end)` after each.
/// `steps` yields `(dt, u)` per step.
pub(crate) fn march(
    model: Model,
    h: &[f64],
    params: &PhysicalParams,
    mut y: StateDensities,
    steps: impl Iterator<Item = (f64, [f64; 3])>,
    clip: bool,
    mut on_step: impl FnMut(usize, &StateDensities, &StateDensities, &StateDensities) -> Result<()>,
) -> Result<StateDensities> {
    let mut clipped = 0usize;
    for (n, (dt, u)) in steps.enumerate() {
        let f0 = rhs_unchecked(&y, u, h, params, model);
        let mut pred = y.clone();
        for c in 0..3 {
            let d = f0.component(c).values();
            for (p, &r) in pred.components_mut()[c].values_mut().iter_mut().zip(d) {
                *p += dt * r;
            }
        }
        let f1 = rhs_unchecked(&pred, u, h, params, model);
        let mut end = pred.clone();
        for c in 0..3 {
            let (y0, d) = (y.component(c).values(), f1.component(c).values());
            for ((e, &a), &r) in end.components_mut()[c].values_mut().iter_mut().zip(y0).zip(d) {
                *e = 0.5 * (a + *e + dt * r);
            }
        }
        if !end.is_finite() {
            return Err(Error::numerical(format!("non-finite state after step {n} (dt = {dt})")));
        }
        if clip {
            for field in end.components_mut() {
                for v in field.values_mut() {
                    if *v < CLIP_THRESHOLD {
                        *v = 0.0;
                        clipped += 1;
                    }
                }
            }
        }
        on_step(n, &y, &pred, &end)?;
        y = end;
    }
    if clipped > 0 {
        log::warn!("clipped {clipped} negative cell values below {CLIP_THRESHOLD}");
    }
    Ok(y)
}

fn check_inputs(h: &IndicatorField, y0: &ScalarField, control: &ControlSignal, snapshots: &[f64]) -> Result<()> {
    if y0.grid() != h.grid() {
        return Err(Error::invalid("initial density and indicator live on different grids"));
    }
    let mass = y0.integrate();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("initial density integrates to {mass}, expected 1")));
    }
    if y0.min() < -1e-12 {
        return Err(Error::invalid("initial density has negative values"));
    }
    let horizon = control.horizon();
    let tol = 1e-9 * horizon.max(1.0);
    if snapshots.iter().any(|&t| !(t >= -tol && t <= horizon + tol)) {
        return Err(Error::invalid(format!("snapshot times must lie in [0, {horizon}]")));
    }
    if snapshots.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("snapshot times must be strictly increasing"));
    }
    Ok(())
}

/// Output of [`solve_mapping_model`].
#[derive(Debug, Clone)]
pub struct MappingSolution {
    /// `(y1, y2, 0)` at the requested snapshot times.
    pub trajectory: DensityTrajectory,
    /// `g(t) = integral of y2` at the snapshot times.
    pub observations: ObservationSeries,
    /// Time average of `y1` over each window between consecutive
    /// snapshots, integrated with the same stage weights as `y2`.
    pub occupancy: Vec<ScalarField>,
    pub final_state: StateDensities,
}

/// Integrates the mapping model: `y1` is transported by the schedule's
/// velocity and diffuses, `y2` accumulates observations at rate `k_o H y1`.
/// The schedule's third channel is ignored.
pub fn solve_mapping_model(
    h: &IndicatorField,
    schedule: &ControlSignal,
    params: &PhysicalParams,
    y0: &ScalarField,
    snapshot_times: &[f64],
    opts: &SolverOptions,
) -> Result<MappingSolution> {
    params.validate()?;
    check_inputs(h, y0, schedule, snapshot_times)?;
    if snapshot_times.is_empty() {
        return Err(Error::invalid("need at least one snapshot time"));
    }
    let grid = *h.grid();
    let dt_limit = step_limit(schedule.bounds(), params, &grid, opts.dt_max);
    let tg = TimeGrid::build(schedule, snapshot_times, dt_limit);
    let snap_nodes: Vec<usize> =
        snapshot_times.iter().map(|&t| tg.node(t).expect("snapshot times are nodes")).collect();

    let mut traj = DensityTrajectory { times: Vec::new(), states: Vec::new() };
    let mut g = Vec::new();
    let mut occupancy = Vec::new();
    let mut acc = vec![0.0; grid.len()];
    let mut next = 0;
    let y = StateDensities::initial(y0.clone());
    if snap_nodes[0] == 0 {
        traj.times.push(tg.times[0]);
        traj.states.push(y.clone());
        g.push(0.0);
        next = 1;
    }
    let steps = (0..tg.steps()).map(|n| (tg.dt(n), schedule.values()[tg.intervals[n]]));
    let final_state = march(Model::Mapping, h.values(), params, y, steps, true, |n, start, pred, end| {
        if n >= snap_nodes[0] {
            let w = 0.5 * tg.dt(n);
            for ((a, &s), &p) in acc.iter_mut().zip(start.y1.values()).zip(pred.y1.values()) {
                *a += w * (s + p);
            }
        }
        if next < snap_nodes.len() && snap_nodes[next] == n + 1 {
            let t = tg.times[n + 1];
            if next > 0 {
                let span = t - tg.times[snap_nodes[next - 1]];
                let avg = acc.iter().map(|a| a / span).collect();
                occupancy.push(ScalarField::from_raw(grid, avg));
                acc.iter_mut().for_each(|a| *a = 0.0);
            }
            traj.times.push(t);
            traj.states.push(end.clone());
            g.push(end.y2.integrate());
            next += 1;
        }
        Ok(())
    })?;
    let observations = ObservationSeries::new(traj.times.clone(), g)?;
    Ok(MappingSolution { trajectory: traj, observations, occupancy, final_state })
}

/// `y1` stored at a subset of nodes; other nodes are interpolated.
#[derive(Debug, Clone)]
pub(crate) struct Y1History {
    nodes: Vec<usize>,
    fields: Vec<Vec<f64>>,
}

impl Y1History {
    pub fn at<'a>(&'a self, n: usize, times: &[f64]) -> Cow<'a, [f64]> {
        let k = self.nodes.partition_point(|&m| m < n);
        if self.nodes[k] == n {
            return Cow::Borrowed(&self.fields[k]);
        }
        let (a, b) = (self.nodes[k - 1], self.nodes[k]);
        let theta = (times[n] - times[a]) / (times[b] - times[a]);
        let out = self.fields[k - 1].iter().zip(&self.fields[k]).map(|(&fa, &fb)| fa + theta * (fb - fa)).collect();
        Cow::Owned(out)
    }
}

/// Output of [`solve_coverage_model`].
#[derive(Debug, Clone)]
pub struct CoverageSolution {
    /// Full state at the requested snapshot times.
    pub trajectory: DensityTrajectory,
    /// Full state at every control breakpoint, including `t = 0` and `T`.
    pub checkpoints: DensityTrajectory,
    pub(crate) time_grid: TimeGrid,
    pub(crate) history: Y1History,
    pub(crate) control_breaks: Vec<f64>,
}

impl CoverageSolution {
    pub fn final_state(&self) -> &StateDensities {
        self.checkpoints.last().expect("checkpoints include T")
    }

    pub fn steps(&self) -> usize {
        self.time_grid.steps()
    }
}

/// Integrates the coverage model: moving agents stop inside the region at
/// rate `k(t) H`, stopped agents resume at rate `k_f`, and every stop adds
/// to the activity density `y3`.
pub fn solve_coverage_model(
    h: &IndicatorField,
    u: &ControlSignal,
    params: &PhysicalParams,
    y0: &ScalarField,
    snapshot_times: &[f64],
    opts: &SolverOptions,
) -> Result<CoverageSolution> {
    params.validate()?;
    check_inputs(h, y0, u, snapshot_times)?;
    if opts.history_stride == 0 {
        return Err(Error::invalid("history stride must be at least 1"));
    }
    let grid = *h.grid();
    let dt_limit = step_limit(u.bounds(), params, &grid, opts.dt_max);
    let tg = TimeGrid::build(u, snapshot_times, dt_limit);
    let last = tg.steps();
    let mut is_break = vec![false; last + 1];
    for &b in u.breaks() {
        is_break[tg.node(b).expect("breakpoints are nodes")] = true;
    }
    let mut is_snap = vec![false; last + 1];
    for &t in snapshot_times {
        is_snap[tg.node(t).expect("snapshot times are nodes")] = true;
    }

    let y = StateDensities::initial(y0.clone());
    let mut trajectory = DensityTrajectory { times: Vec::new(), states: Vec::new() };
    let mut checkpoints = trajectory.clone();
    let mut history = Y1History { nodes: vec![0], fields: vec![y.y1.values().to_vec()] };
    if is_snap[0] {
        trajectory.times.push(0.0);
        trajectory.states.push(y.clone());
    }
    checkpoints.times.push(0.0);
    checkpoints.states.push(y.clone());

    let stride = opts.history_stride;
    let steps = (0..last).map(|n| (tg.dt(n), u.values()[tg.intervals[n]]));
    march(Model::Coverage, h.values(), params, y, steps, true, |n, _, _, end| {
        let node = n + 1;
        let t = tg.times[node];
        if node % stride == 0 || is_break[node] {
            history.nodes.push(node);
            history.fields.push(end.y1.values().to_vec());
        }
        if is_snap[node] {
            trajectory.times.push(t);
            trajectory.states.push(end.clone());
        }
        if is_break[node] {
            checkpoints.times.push(t);
            checkpoints.states.push(end.clone());
        }
        Ok(())
    })?;
    Ok(CoverageSolution { trajectory, checkpoints, time_grid: tg, history, control_breaks: u.breaks().to_vec() })
}
