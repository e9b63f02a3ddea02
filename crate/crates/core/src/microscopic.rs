//! Agent-based simulation of the robot ensemble.
//!
//! Each agent moves by `X += Y (v dt + sqrt(2 D dt) Z)` with `Y = 1` while
//! moving and `Y = 0` while stopped, is reflected specularly at the walls,
//! and switches state with the probabilities of the reaction network:
//! moving to stopped with `H(X) k dt`, stopped to moving with `k_f dt`. In
//! mapping mode agents never stop; instead a moving agent inside the region
//! records an observation with probability `H(X) k_o dt`.
//!
//! Every agent draws from its own ChaCha stream (same seed, stream = agent
//! id), so results do not depend on scheduling or on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::control::ControlSignal;
use crate::error::{Error, Result};
use crate::grid::{Grid, IndicatorField, Rect, ScalarField};
use crate::macroscopic::PhysicalParams;
use crate::observations::ObservationSeries;

/// `x + v dt + sqrt(2 D dt) z`, before any reflection.
pub fn langevin_step(x: (f64, f64), v: (f64, f64), d: f64, dt: f64, z: (f64, f64)) -> (f64, f64) {
    let s = (2.0 * d * dt).sqrt();
    (x.0 + v.0 * dt + s * z.0, x.1 + v.1 * dt + s * z.1)
}

fn fold(mut x: f64, lo: f64, hi: f64) -> f64 {
    // Bounded so a wild coordinate cannot spin forever.
    for _ in 0..64 {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return x;
        }
    }
    x.clamp(lo, hi)
}

/// Mirrors each coordinate back across the wall it crossed until the point
/// is inside the closed rectangle.
pub fn specular_reflect(p: (f64, f64), domain: &Rect) -> (f64, f64) {
    (fold(p.0, domain.x_lo, domain.x_hi), fold(p.1, domain.y_lo, domain.y_hi))
}

/// How a rate becomes a per-step switching probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwitchRule {
    /// `k dt`
    #[default]
    FirstOrder,
    /// `1 - exp(-k dt)`
    Exponential,
}

impl SwitchRule {
    pub fn probability(self, rate: f64, dt: f64) -> f64 {
        match self {
            SwitchRule::FirstOrder => rate * dt,
            SwitchRule::Exponential => -(-rate * dt).exp_m1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: (f64, f64),
    pub moving: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Observation,
    ActivityStart,
    ActivityEnd,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Observation => "observation",
            EventKind::ActivityStart => "activity_start",
            EventKind::ActivityEnd => "activity_end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub agent: usize,
    pub t: f64,
    pub position: (f64, f64),
    pub kind: EventKind,
}

/// State switch over one step. `u` is a uniform draw in `[0, 1)`.
///
/// Returns the new state and the event it triggers, if any.
pub fn transition_step(
    state: AgentState,
    k: f64,
    k_f: f64,
    h_at_x: f64,
    dt: f64,
    u: f64,
    rule: SwitchRule,
) -> Result<(AgentState, Option<EventKind>)> {
    let p = if state.moving { rule.probability(h_at_x * k, dt) } else { rule.probability(k_f, dt) };
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("switching probability {p} outside [0, 1]")));
    }
    if u >= p {
        return Ok((state, None));
    }
    let kind = if state.moving { EventKind::ActivityStart } else { EventKind::ActivityEnd };
    Ok((AgentState { moving: !state.moving, ..state }, Some(kind)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Mapping,
    Coverage,
}

/// Where agents start.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialPositions {
    /// Normal distribution conditioned on the domain (rejection sampling).
    Gaussian { center: (f64, f64), sigma: f64 },
    /// Cell drawn with probability `value * area`, then uniform in the cell.
    Density(ScalarField),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub agents: usize,
    pub dt: f64,
    pub horizon: f64,
    pub mode: SimMode,
    pub params: PhysicalParams,
    /// Velocity and stopping rate over time; the rate channel is unused in
    /// mapping mode.
    pub control: ControlSignal,
    pub region: IndicatorField,
    pub seed: u64,
    pub initial: InitialPositions,
    pub switch_rule: SwitchRule,
    /// Times at which positions are recorded and `g_hat` is sampled.
    pub sample_times: Vec<f64>,
    /// Keep every `stride`-th position of every agent, if set.
    pub trajectory_stride: Option<usize>,
}

impl SimConfig {
    fn steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    fn step_dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.agents == 0 {
            return Err(Error::invalid("need at least one agent"));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::invalid("dt and horizon must be positive"));
        }
        if self.control.horizon() + 1e-9 < self.horizon {
            return Err(Error::invalid("control ends before the simulation horizon"));
        }
        let rate = match self.mode {
            SimMode::Mapping => self.params.obs_rate,
            SimMode::Coverage => self.control.values().iter().map(|u| u[2]).fold(self.params.resume_rate, f64::max),
        };
        if self.dt * rate > 0.1 * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "dt * max rate = {} exceeds 0.1; reduce dt below {}",
                self.dt * rate,
                0.1 / rate
            )));
        }
        if self.sample_times.iter().any(|&t| !(t >= 0.0 && t <= self.horizon + 1e-9)) {
            return Err(Error::invalid("sample times must lie in [0, horizon]"));
        }
        if self.sample_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("sample times must be strictly increasing"));
        }
        if self.trajectory_stride == Some(0) {
            return Err(Error::invalid("trajectory stride must be at least 1"));
        }
        if let InitialPositions::Density(f) = &self.initial {
            if f.grid() != self.region.grid() || f.min() < 0.0 || !(f.integrate() > 0.0) {
                return Err(Error::invalid(
                    "initial density must be nonnegative with positive mass on the region grid",
                ));
            }
        }
        Ok(())
    }
}

/// Output of [`simulate_ensemble`].
#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Events ordered by agent id, then time.
    pub events: Vec<Event>,
    /// Cumulative observations per agent at the sample times.
    pub g_hat: ObservationSeries,
    /// Agent positions at each sample time (`positions[s][agent]`).
    pub positions: Vec<Vec<(f64, f64)>>,
    pub final_states: Vec<AgentState>,
    /// `(agent, t, x, y)` rows, present when a stride was requested.
    pub trajectories: Option<Vec<(usize, f64, f64, f64)>>,
}

impl SimOutput {
    /// Positions of all events of `kind`.
    pub fn event_positions(&self, kind: EventKind) -> Vec<(f64, f64)> {
        self.events.iter().filter(|e| e.kind == kind).map(|e| e.position).collect()
    }
}

struct AgentRun {
    events: Vec<Event>,
    samples: Vec<(f64, f64)>,
    final_state: AgentState,
    trajectory: Vec<(usize, f64, f64, f64)>,
}

fn initial_position(
    rng: &mut ChaCha8Rng,
    init: &InitialPositions,
    domain: &Rect,
    cdf: &[f64],
    grid: &Grid,
) -> (f64, f64) {
    match init {
        InitialPositions::Gaussian { center, sigma } => {
            for _ in 0..10_000 {
                let zx: f64 = rng.sample(StandardNormal);
                let zy: f64 = rng.sample(StandardNormal);
                let p = (center.0 + sigma * zx, center.1 + sigma * zy);
                if domain.contains(p.0, p.1) {
                    return p;
                }
            }
            (center.0.clamp(domain.x_lo, domain.x_hi), center.1.clamp(domain.y_lo, domain.y_hi))
        }
        InitialPositions::Density(_) => {
            let r: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
            let c = cdf.partition_point(|&v| v <= r).min(cdf.len() - 1);
            let (i, j) = (c % grid.nx(), c / grid.nx());
            let (cx, cy) = grid.cell_center(i, j);
            let ox: f64 = rng.random::<f64>() - 0.5;
            let oy: f64 = rng.random::<f64>() - 0.5;
            (cx + ox * grid.hx(), cy + oy * grid.hy())
        }
    }
}

fn run_agent(cfg: &SimConfig, agent: usize, cdf: &[f64], sample_nodes: &[usize]) -> Result<AgentRun> {
    let grid = *cfg.region.grid();
    let domain = grid.extent();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(agent as u64);
    let steps = cfg.steps();
    let dt = cfg.step_dt();
    let d = cfg.params.diffusion;
    let mut state =
        AgentState { position: initial_position(&mut rng, &cfg.initial, &domain, cdf, &grid), moving: true };
    let h_at = |p: (f64, f64)| grid.locate(p.0, p.1).map(|(i, j)| cfg.region.values()[grid.index(i, j)]).unwrap_or(0.0);
    let mut events = Vec::new();
    let mut samples = Vec::with_capacity(sample_nodes.len());
    let mut trajectory = Vec::new();
    let mut next_sample = 0;
    for n in 0..=steps {
        let t = n as f64 * dt;
        while next_sample < sample_nodes.len() && sample_nodes[next_sample] == n {
            samples.push(state.position);
            next_sample += 1;
        }
        if let Some(stride) = cfg.trajectory_stride {
            if n % stride == 0 || n == steps {
                trajectory.push((agent, t, state.position.0, state.position.1));
            }
        }
        if n == steps {
            break;
        }
        let u = cfg.control.at(t);
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        let draw: f64 = rng.random();
        let here = state.position;
        let h = h_at(here);
        let t_next = (n + 1) as f64 * dt;
        match cfg.mode {
            SimMode::Mapping => {
                let p = cfg.switch_rule.probability(h * cfg.params.obs_rate, dt);
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(format!("observation probability {p} outside [0, 1]")));
                }
                if draw < p {
                    events.push(Event { agent, t: t_next, position: here, kind: EventKind::Observation });
                }
            }
            SimMode::Coverage => {
                let (next, event) = transition_step(state, u[2], cfg.params.resume_rate, h, dt, draw, cfg.switch_rule)?;
                if let Some(kind) = event {
                    events.push(Event { agent, t: t_next, position: here, kind });
                }
                // Motion uses the state at the start of the step.
                if state.moving {
                    state.position = specular_reflect(langevin_step(here, (u[0], u[1]), d, dt, (zx, zy)), &domain);
                }
                state.moving = next.moving;
                continue;
            }
        }
        state.position = specular_reflect(langevin_step(here, (u[0], u[1]), d, dt, (zx, zy)), &domain);
    }
    Ok(AgentRun { events, samples, final_state: state, trajectory })
}

/// Runs all agents (in parallel on the current rayon pool) and merges
/// their outputs in agent order.
pub fn simulate_ensemble(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let dt = cfg.step_dt();
    let sample_nodes: Vec<usize> = cfg.sample_times.iter().map(|&s| ((s / dt) + 1e-9).floor() as usize).collect();
    let cdf: Vec<f64> = match &cfg.initial {
        InitialPositions::Density(f) => f
            .values()
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect(),
        InitialPositions::Gaussian { .. } => Vec::new(),
    };
    let runs =
        (0..cfg.agents).into_par_iter().map(|a| run_agent(cfg, a, &cdf, &sample_nodes)).collect::<Result<Vec<_>>>()?;

    let mut obs_times: Vec<f64> =
        runs.iter().flat_map(|r| r.events.iter()).filter(|e| e.kind == EventKind::Observation).map(|e| e.t).collect();
    obs_times.sort_by(f64::total_cmp);
    let n = cfg.agents as f64;
    let g: Vec<f64> =
        cfg.sample_times.iter().map(|&s| obs_times.partition_point(|&t| t <= s + 1e-9) as f64 / n).collect();
    let g_hat = if cfg.sample_times.is_empty() {
        ObservationSeries::new(vec![cfg.horizon], vec![obs_times.len() as f64 / n])?
    } else {
        ObservationSeries::new(cfg.sample_times.clone(), g)?
    };
    let positions = (0..cfg.sample_times.len()).map(|s| runs.iter().map(|r| r.samples[s]).collect()).collect();
    let trajectories = cfg.trajectory_stride.map(|_| runs.iter().flat_map(|r| r.trajectory.iter().copied()).collect());
    let final_states = runs.iter().map(|r| r.final_state).collect();
    let events = runs.into_iter().flat_map(|r| r.events).collect();
    Ok(SimOutput { events, g_hat, positions, final_states, trajectories })
}

/// Histogram of `points` divided by `n * cell area`; integrates to
/// `points.len() / n`. Points on the far walls go to the last cell.
pub fn empirical_density(points: &[(f64, f64)], grid: &Grid, n: usize) -> Result<ScalarField> {
    if n == 0 {
        return Err(Error::invalid("normalisation count must be positive"));
    }
    let mut counts = vec![0.0; grid.len()];
    for &(x, y) in points {
        if let Some((i, j)) = grid.locate(x, y) {
            counts[grid.index(i, j)] += 1.0;
        }
    }
    let scale = 1.0 / (n as f64 * grid.cell_area());
    ScalarField::new(*grid, counts.into_iter().map(|c| c * scale).collect())
}
