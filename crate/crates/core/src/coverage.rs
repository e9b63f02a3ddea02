//! Open-loop coverage control by adjoint-based projected gradient descent.
//!
//! The reduced objective is
//! `J(u) = 1/2 |W y(T) - z|^2 + lambda/2 |u|^2`, where `y` solves the
//! coverage model under the piecewise-constant control `u = (vx, vy, k)`.
//! Gradients are reported as `L2(0, T)` densities: on interval `I_m`,
//! `dJ/du_m = (1/|I_m|) * integral over I_m of the adjoint integrand + lambda u_m`,
//! so that the directional derivative along `h` is `sum_m |I_m| g_m . h_m`.

use rayon::prelude::*;

use crate::control::{project_controls, ControlBounds, ControlSignal};
use crate::error::{Error, Result};
use crate::grid::{Grid, IndicatorField, ScalarField};
use crate::macroscopic::{
    adjoint_sweep, solve_coverage_model, terminal_adjoint, CoverageSolution, PhysicalParams, SolverOptions,
    StateDensities,
};

/// How the velocity components of the gradient are assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientForm {
    /// `integral of y1 * d(p1)/dx_i`.
    #[default]
    IntegrationByParts,
    /// `-integral of d(y1)/dx_i * p1` plus the boundary term `n_i y1 p1`.
    BoundaryTerm,
}

/// Everything that defines one coverage optimisation.
#[derive(Debug, Clone)]
pub struct CoverageProblem {
    /// Map of the region where activity happens.
    pub region: IndicatorField,
    pub params: PhysicalParams,
    pub y0: ScalarField,
    pub horizon: f64,
    /// Target `(y1, y2, y3)` at the final time.
    pub target: StateDensities,
    /// Diagonal of `W`.
    pub weights: [f64; 3],
    pub lambda: f64,
    pub bounds: ControlBounds,
    pub intervals: usize,
    pub solver: SolverOptions,
    pub gradient_form: GradientForm,
}

impl CoverageProblem {
    /// Problem with `W = diag(0, 0, 1)` and target `(0, 0, y3_target)`.
    #[allow(clippy::too_many_arguments)]
    pub fn activity_target(
        region: IndicatorField,
        params: PhysicalParams,
        y0: ScalarField,
        horizon: f64,
        y3_target: ScalarField,
        lambda: f64,
        bounds: ControlBounds,
        intervals: usize,
    ) -> Result<Self> {
        let grid = *region.grid();
        let target = StateDensities::new(ScalarField::zeros(grid), ScalarField::zeros(grid), y3_target);
        let p = CoverageProblem {
            region,
            params,
            y0,
            horizon,
            target,
            weights: [0.0, 0.0, 1.0],
            lambda,
            bounds,
            intervals,
            solver: SolverOptions::default(),
            gradient_form: GradientForm::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let g = self.region.grid();
        if self.y0.grid() != g || self.target.grid() != g {
            return Err(Error::invalid("region, initial density and target grids differ"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if self.intervals == 0 || !(self.horizon > 0.0) {
            return Err(Error::invalid("need a positive horizon and at least one control interval"));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("W weights must be finite"));
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        self.region.grid()
    }

    /// Constant control `value` (projected onto the bounds) on the problem's
    /// uniform time grid.
    pub fn constant_control(&self, value: [f64; 3]) -> Result<ControlSignal> {
        ControlSignal::uniform(self.horizon, self.intervals, self.bounds.clamp(value), self.bounds)
    }

    fn check_control(&self, u: &ControlSignal) -> Result<()> {
        if (u.horizon() - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::invalid(format!(
                "control horizon {} differs from problem horizon {}",
                u.horizon(),
                self.horizon
            )));
        }
        if u.bounds() != &self.bounds {
            return Err(Error::invalid("control bounds differ from the problem bounds"));
        }
        Ok(())
    }
}

/// `1/2 * sum_c |w_c y_c - z_c|^2` with the midpoint rule.
pub fn terminal_misfit(state: &StateDensities, prob: &CoverageProblem) -> f64 {
    (0..3)
        .map(|c| {
            let w = prob.weights[c];
            let area = state.grid().cell_area();
            state
                .component(c)
                .values()
                .iter()
                .zip(prob.target.component(c).values())
                .map(|(y, z)| (w * y - z).powi(2))
                .sum::<f64>()
                * area
        })
        .sum::<f64>()
        * 0.5
}

/// Reduced objective `J(u)` together with the forward solve behind it.
pub fn reduced_objective(u: &ControlSignal, prob: &CoverageProblem) -> Result<(f64, CoverageSolution)> {
    prob.check_control(u)?;
    let sol = solve_coverage_model(&prob.region, u, &prob.params, &prob.y0, &[], &prob.solver)?;
    let j = terminal_misfit(sol.final_state(), prob) + 0.5 * prob.lambda * u.l2_norm_sq();
    Ok((j, sol))
}

/// `J` evaluated with horizon `t_m` at every control breakpoint: the misfit
/// of the state at `t_m` plus the control cost accrued up to `t_m`.
pub fn partial_horizon_objective(u: &ControlSignal, sol: &CoverageSolution, prob: &CoverageProblem) -> Vec<(f64, f64)> {
    let mut cost = 0.0;
    let mut out = Vec::with_capacity(u.intervals() + 1);
    for (m, (t, state)) in sol.checkpoints.times.iter().zip(&sol.checkpoints.states).enumerate() {
        if m > 0 {
            let v = u.values()[m - 1];
            cost += u.interval_len(m - 1) * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        }
        out.push((*t, terminal_misfit(state, prob) + 0.5 * prob.lambda * cost));
    }
    out
}

/// Adjoint gradient of the reduced objective.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub objective: f64,
    /// Per-interval gradient using the problem's [`GradientForm`].
    pub gradient: Vec<[f64; 3]>,
    /// Velocity components from the integration-by-parts form.
    pub by_parts: Vec<[f64; 2]>,
    /// Velocity components from the boundary-term form.
    pub boundary_form: Vec<[f64; 2]>,
    /// Largest `|a - b| / max(|a|, |b|)` over the two velocity forms
    /// (entries where both vanish are skipped).
    pub form_discrepancy: f64,
}

impl GradientReport {
    /// `<grad J, h> = sum_m |I_m| g_m . h_m`.
    pub fn directional(&self, u: &ControlSignal, h: &[[f64; 3]]) -> f64 {
        debug_assert_eq!(h.len(), u.intervals());
        self.gradient
            .iter()
            .zip(h)
            .enumerate()
            .map(|(m, (a, b))| u.interval_len(m) * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]))
            .sum()
    }

    pub fn l2_norm(&self, u: &ControlSignal) -> f64 {
        self.directional(u, &self.gradient).sqrt()
    }
}

/// Spatial integrals of the adjoint integrand at one time node:
/// `[G3, by-parts x, by-parts y, boundary x, boundary y]`.
fn integrand(grid: &Grid, h: &[f64], y1: &[f64], p: &StateDensities) -> [f64; 5] {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let area = grid.cell_area();
    let (p1, p2, p3) = (p.y1.values(), p.y2.values(), p.y3.values());
    // Centred differences with boundary traces equal to the cell value;
    // with this choice the two velocity forms agree to round-off.
    let dx = |f: &[f64], i: usize, c: usize| {
        let r = if i + 1 < nx { 0.5 * (f[c] + f[c + 1]) } else { f[c] };
        let l = if i > 0 { 0.5 * (f[c - 1] + f[c]) } else { f[c] };
        (r - l) / hx
    };
    let dy = |f: &[f64], j: usize, c: usize| {
        let t = if j + 1 < ny { 0.5 * (f[c] + f[c + nx]) } else { f[c] };
        let b = if j > 0 { 0.5 * (f[c - nx] + f[c]) } else { f[c] };
        (t - b) / hy
    };
    let mut acc = [0.0; 5];
    for j in 0..ny {
        for i in 0..nx {
            let c = i + j * nx;
            acc[0] += h[c] * y1[c] * (-p1[c] + p2[c] + p3[c]);
            acc[1] += y1[c] * dx(p1, i, c);
            acc[2] += y1[c] * dy(p1, j, c);
            acc[3] -= dx(y1, i, c) * p1[c];
            acc[4] -= dy(y1, j, c) * p1[c];
        }
    }
    for v in &mut acc {
        *v *= area;
    }
    let mut bx = 0.0;
    for j in 0..ny {
        let (l, r) = (j * nx, j * nx + nx - 1);
        bx += y1[r] * p1[r] - y1[l] * p1[l];
    }
    let mut by = 0.0;
    for i in 0..nx {
        let (b, t) = (i, i + (ny - 1) * nx);
        by += y1[t] * p1[t] - y1[b] * p1[b];
    }
    acc[3] += bx * hy;
    acc[4] += by * hx;
    acc
}

/// Gradient from an existing forward solve of `u`.
pub fn gradient_from_solution(
    u: &ControlSignal,
    sol: &CoverageSolution,
    objective: f64,
    prob: &CoverageProblem,
) -> Result<GradientReport> {
    prob.check_control(u)?;
    let terminal = terminal_adjoint(sol.final_state(), prob.weights, &prob.target)?;
    let grid = *prob.grid();
    let tg = &sol.time_grid;
    let mut sums = vec![[0.0f64; 5]; u.intervals()];
    let mut next: Option<[f64; 5]> = None;
    adjoint_sweep(sol, u, &prob.region, &prob.params, terminal, |n, p| {
        let y1 = sol.history.at(n, &tg.times);
        let here = integrand(&grid, prob.region.values(), &y1, p);
        if let Some(after) = next {
            let w = 0.5 * tg.dt(n);
            let m = tg.intervals[n];
            for k in 0..5 {
                sums[m][k] += w * (here[k] + after[k]);
            }
        }
        next = Some(here);
        Ok(())
    })?;

    let lambda = prob.lambda;
    let mut gradient = Vec::with_capacity(u.intervals());
    let mut by_parts = Vec::with_capacity(u.intervals());
    let mut boundary_form = Vec::with_capacity(u.intervals());
    let mut discrepancy: f64 = 0.0;
    for (m, s) in sums.iter().enumerate() {
        let len = u.interval_len(m);
        let v = u.values()[m];
        let bp = [s[1] / len + lambda * v[0], s[2] / len + lambda * v[1]];
        let bt = [s[3] / len + lambda * v[0], s[4] / len + lambda * v[1]];
        for k in 0..2 {
            let scale = bp[k].abs().max(bt[k].abs());
            if scale > 0.0 {
                discrepancy = discrepancy.max((bp[k] - bt[k]).abs() / scale);
            }
        }
        let vel = match prob.gradient_form {
            GradientForm::IntegrationByParts => bp,
            GradientForm::BoundaryTerm => bt,
        };
        gradient.push([vel[0], vel[1], s[0] / len + lambda * v[2]]);
        by_parts.push(bp);
        boundary_form.push(bt);
    }
    if gradient.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::numerical("coverage gradient is not finite"));
    }
    Ok(GradientReport { objective, gradient, by_parts, boundary_form, form_discrepancy: discrepancy })
}

/// Forward solve, adjoint solve and gradient assembly for control `u`.
pub fn coverage_gradient(u: &ControlSignal, prob: &CoverageProblem) -> Result<GradientReport> {
    let (j, sol) = reduced_objective(u, prob)?;
    gradient_from_solution(u, &sol, j, prob)
}

/// One finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSample {
    /// `(J(u + eps h) - J(u - eps h)) / (2 eps)`
    pub finite_difference: f64,
    /// `<grad J, h>` from the adjoint.
    pub adjoint: f64,
    /// `|fd - adjoint| / |fd|`
    pub rel_error: f64,
}

/// Compares the adjoint gradient with central differences along each
/// direction. `u +- eps h` must stay inside the bounds, so that every
/// evaluation shares one time grid.
pub fn finite_difference_check(
    u: &ControlSignal,
    prob: &CoverageProblem,
    directions: &[Vec<[f64; 3]>],
    eps: f64,
) -> Result<(GradientReport, Vec<FdSample>)> {
    let report = coverage_gradient(u, prob)?;
    let shifted = |h: &[[f64; 3]], s: f64| -> Result<ControlSignal> {
        if h.len() != u.intervals() {
            return Err(Error::invalid("direction length differs from the interval count"));
        }
        let values =
            u.values().iter().zip(h).map(|(a, b)| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]).collect();
        u.with_values(values)
    };
    let samples = directions
        .par_iter()
        .map(|h| {
            let jp = reduced_objective(&shifted(h, eps)?, prob)?.0;
            let jm = reduced_objective(&shifted(h, -eps)?, prob)?.0;
            let fd = (jp - jm) / (2.0 * eps);
            let ad = report.directional(u, h);
            Ok(FdSample { finite_difference: fd, adjoint: ad, rel_error: (fd - ad).abs() / fd.abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((report, samples))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    /// Stop once the relative decrease of `J` falls below this.
    pub tol: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions { max_iters: 100, tol: 1e-6, armijo_c: 1e-4, backtrack: 0.5, max_backtracks: 30 }
    }
}

#[derive(Debug, Clone)]
pub struct CoverageResult {
    pub control: ControlSignal,
    /// `J` at the start and after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Forward solve of the final control.
    pub solution: CoverageSolution,
}

/// Projected gradient descent `u <- P(u - alpha grad J)` with Armijo
/// backtracking. The first trial step is `1 / |grad J(u0)|`; later
/// iterations start from twice the last accepted step.
pub fn optimize_coverage(u0: &ControlSignal, prob: &CoverageProblem, opts: &OptimizeOptions) -> Result<CoverageResult> {
    prob.validate()?;
    let mut u = u0.with_values(project_controls(u0.values(), &prob.bounds))?;
    let (mut j, mut sol) = reduced_objective(&u, prob)?;
    let mut history = vec![j];
    let mut report = gradient_from_solution(&u, &sol, j, prob)?;
    let norm = report.l2_norm(&u);
    let mut alpha = if norm > 0.0 { 1.0 / norm } else { 1.0 };
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        let mut step = if iterations == 1 { alpha } else { 2.0 * alpha };
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let raw: Vec<[f64; 3]> = u
                .values()
                .iter()
                .zip(&report.gradient)
                .map(|(a, g)| [a[0] - step * g[0], a[1] - step * g[1], a[2] - step * g[2]])
                .collect();
            let trial = u.with_values(project_controls(&raw, &prob.bounds))?;
            let delta: Vec<[f64; 3]> =
                trial.values().iter().zip(u.values()).map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]]).collect();
            let decrease = report.directional(&u, &delta);
            if decrease >= 0.0 {
                // Projected step does not move or is not a descent direction.
                break;
            }
            let (jt, st) = reduced_objective(&trial, prob).inspect_err(|_| {
                log::error!("forward solve failed at iteration {iterations}; last accepted controls: {:?}", u.values());
            })?;
            if jt <= j + opts.armijo_c * decrease {
                accepted = Some((trial, jt, st));
                break;
            }
            step *= opts.backtrack;
        }
        let Some((trial, jt, st)) = accepted else {
            converged = true;
            break;
        };
        alpha = step;
        let rel = (j - jt) / j.abs().max(f64::MIN_POSITIVE);
        u = trial;
        j = jt;
        sol = st;
        history.push(j);
        log::info!("iteration {iterations}: J = {j:.6e}, step = {step:.3e}");
        if rel < opts.tol {
            converged = true;
            break;
        }
        report = gradient_from_solution(&u, &sol, j, prob).inspect_err(|_| {
            log::error!("adjoint failed at iteration {iterations}; controls: {:?}", u.values());
        })?;
    }
    Ok(CoverageResult { control: u, history, iterations, converged, solution: sol })
}

/// Target activity `C / 50` on the region (optionally only where `y >= y_min`),
/// as in [`crate::grid::partition_targets`].
pub fn activity_target(region: &IndicatorField, spec: crate::grid::TargetSpec, parts: usize) -> Result<ScalarField> {
    crate::grid::partition_targets(region, parts, spec).map(|(_, f)| f)
}
