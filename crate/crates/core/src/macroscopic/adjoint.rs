//! Backward adjoint of the coverage model, solved forward in reversed time
//! `tau = T - t` on the same time grid as the forward run.

use crate::control::ControlSignal;
use crate::error::{Error, Result};
use crate::grid::IndicatorField;

use super::solver::{march, CoverageSolution};
use super::{Model, PhysicalParams, StateDensities};

/// Adjoint states `(p1, p2, p3)` in increasing forward time.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateDensities>,
}

/// Terminal condition `p(T) = W (W y(T) - y_target)` for a diagonal `W`.
pub fn terminal_adjoint(y_t: &StateDensities, weights: [f64; 3], target: &StateDensities) -> Result<StateDensities> {
    if y_t.grid() != target.grid() {
        return Err(Error::invalid("target and state live on different grids"));
    }
    let mut p = y_t.clone();
    for (c, field) in p.components_mut().into_iter().enumerate() {
        let w = weights[c];
        for (v, &z) in field.values_mut().iter_mut().zip(target.component(c).values()) {
            *v = w * (w * *v - z);
        }
    }
    Ok(p)
}

/// Marches the adjoint from `T` down to `0`, calling `visit(node, p)` at every
/// node of the forward time grid, starting with the last.
pub(crate) fn adjoint_sweep(
    forward: &CoverageSolution,
    u: &ControlSignal,
    h: &IndicatorField,
    params: &PhysicalParams,
    terminal: StateDensities,
    mut visit: impl FnMut(usize, &StateDensities) -> Result<()>,
) -> Result<StateDensities> {
    if forward.control_breaks != u.breaks() {
        return Err(Error::invalid("control time grid differs from the forward solve"));
    }
    if terminal.grid() != h.grid() || forward.final_state().grid() != h.grid() {
        return Err(Error::invalid("adjoint, forward state and indicator grids differ"));
    }
    if !terminal.is_finite() {
        return Err(Error::numerical("terminal adjoint data is not finite"));
    }
    params.validate()?;
    let tg = &forward.time_grid;
    let last = tg.steps();
    visit(last, &terminal)?;
    let steps = (0..last).map(|k| {
        let n = last - 1 - k;
        (tg.dt(n), u.values()[tg.intervals[n]])
    });
    march(Model::AdjointTransformed, h.values(), params, terminal, steps, false, |k, _, _, p| visit(last - 1 - k, p))
}

/// Solves the adjoint for the forward run `forward` (which must have used
/// the same control) and returns `p` at the forward snapshot and checkpoint
/// times.
pub fn solve_adjoint(
    forward: &CoverageSolution,
    u: &ControlSignal,
    h: &IndicatorField,
    params: &PhysicalParams,
    weights: [f64; 3],
    target: &StateDensities,
) -> Result<AdjointTrajectory> {
    let terminal = terminal_adjoint(forward.final_state(), weights, target)?;
    let tg = &forward.time_grid;
    let mut keep = vec![false; tg.times.len()];
    for &t in forward.trajectory.times.iter().chain(&forward.checkpoints.times) {
        if let Some(n) = tg.node(t) {
            keep[n] = true;
        }
    }
    let mut out: Vec<(f64, StateDensities)> = Vec::new();
    adjoint_sweep(forward, u, h, params, terminal, |n, p| {
        if keep[n] {
            out.push((tg.times[n], p.clone()));
        }
        Ok(())
    })?;
    out.reverse();
    let (times, states) = out.into_iter().unzip();
    Ok(AdjointTrajectory { times, states })
}
