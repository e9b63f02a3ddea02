//! Region reconstruction from unlocalised observation counts.
//!
//! The forward map sends a candidate indicator `H` to the observation rate
//! `(K H)(t) = k_o * integral of H(x) y1(x, t) dx`. Given measured rates `d`,
//! we minimise the Tikhonov functional
//! `J(H) = 1/2 |K H - d|^2 + lambda/2 |H|^2` over `0 <= H <= 1`
//! by projected gradient descent and threshold the minimiser at 0.5.
//!
//! The kernel `y1` enters through a [`SnapshotBasis`]: one field per time
//! window together with the window's length, which doubles as the
//! quadrature weight of the time inner product. Data are average observation
//! rates over the same windows, so the cumulative count `g(t)` only needs to
//! be known at the window edges.

use crate::error::{Error, Result};
use crate::grid::{Grid, IndicatorField, ScalarField};
use crate::macroscopic::MappingSolution;
use crate::observations::ObservationSeries;

/// Kernel samples of the mapping operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBasis {
    windows: Vec<(f64, f64)>,
    fields: Vec<ScalarField>,
}

impl SnapshotBasis {
    /// `fields[j]` is the time average of `y1` over `[edges[j], edges[j+1]]`.
    pub fn from_windows(edges: &[f64], fields: Vec<ScalarField>) -> Result<Self> {
        if edges.len() != fields.len() + 1 {
            return Err(Error::invalid(format!("{} window edges for {} fields", edges.len(), fields.len())));
        }
        let windows = edges.windows(2).map(|w| (w[0], w[1])).collect();
        Self::build(windows, fields)
    }

    /// Instantaneous `y1` samples at increasing times `t_1 < ... < t_S`,
    /// weighted by the trapezoid rule.
    pub fn from_snapshots(times: &[f64], fields: Vec<ScalarField>) -> Result<Self> {
        if times.len() != fields.len() || times.len() < 2 {
            return Err(Error::invalid("need at least two snapshots, one field per time"));
        }
        let s = times.len();
        let windows = (0..s)
            .map(|j| {
                let a = if j == 0 { times[0] } else { 0.5 * (times[j - 1] + times[j]) };
                let b = if j + 1 == s { times[s - 1] } else { 0.5 * (times[j] + times[j + 1]) };
                (a, b)
            })
            .collect();
        Self::build(windows, fields)
    }

    /// The window-averaged kernel produced by a mapping-model solve.
    pub fn from_solution(sol: &MappingSolution) -> Result<Self> {
        Self::from_windows(&sol.trajectory.times, sol.occupancy.clone())
    }

    fn build(windows: Vec<(f64, f64)>, fields: Vec<ScalarField>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::invalid("snapshot basis is empty"));
        }
        if windows.iter().any(|&(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::invalid("snapshot windows must have positive length"));
        }
        let grid = fields[0].grid();
        if fields.iter().any(|f| f.grid() != grid) {
            return Err(Error::invalid("snapshot fields live on different grids"));
        }
        Ok(SnapshotBasis { windows, fields })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.fields[0].grid()
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn windows(&self) -> &[(f64, f64)] {
        &self.windows
    }

    /// Quadrature weights `w_j` (window lengths, seconds).
    pub fn weights(&self) -> Vec<f64> {
        self.windows.iter().map(|&(a, b)| b - a).collect()
    }

    /// Window midpoints.
    pub fn times(&self) -> Vec<f64> {
        self.windows.iter().map(|&(a, b)| 0.5 * (a + b)).collect()
    }

    /// Average observation rate of `series` over each window.
    pub fn rates(&self, series: &ObservationSeries) -> Vec<f64> {
        self.windows.iter().map(|&(a, b)| (series.at(b) - series.at(a)) / (b - a)).collect()
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid() != grid {
            return Err(Error::invalid("field and snapshot basis live on different grids"));
        }
        Ok(())
    }
}

/// `(K H)_j = k_o * sum over cells of H * y1_j * area`.
pub fn apply_k(h: &ScalarField, basis: &SnapshotBasis, k_o: f64) -> Result<Vec<f64>> {
    basis.check_grid(h.grid())?;
    Ok(basis.fields.iter().map(|f| k_o * h.dot(f)).collect())
}

/// `(K* G)(x) = k_o * sum_j w_j G_j y1_j(x)`, the exact transpose of
/// [`apply_k`] under the weighted time and area-weighted space products.
pub fn apply_k_adjoint(g: &[f64], basis: &SnapshotBasis, k_o: f64) -> Result<ScalarField> {
    if g.len() != basis.len() {
        return Err(Error::invalid(format!("{} time samples for a basis of {}", g.len(), basis.len())));
    }
    let mut out = ScalarField::zeros(*basis.grid());
    for ((&gj, w), f) in g.iter().zip(basis.weights()).zip(&basis.fields) {
        out.axpy(k_o * w * gj, f);
    }
    Ok(out)
}

/// Weighted time inner product `sum_j w_j a_j b_j`.
pub fn time_dot(basis: &SnapshotBasis, a: &[f64], b: &[f64]) -> f64 {
    basis.weights().iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

/// Data, kernel and regularisation of one reconstruction.
#[derive(Debug, Clone)]
pub struct MappingProblem {
    pub basis: SnapshotBasis,
    /// Observation rate per window (1/s per unit mass).
    pub data: Vec<f64>,
    pub k_o: f64,
    pub lambda: f64,
}

impl MappingProblem {
    pub fn new(basis: SnapshotBasis, data: Vec<f64>, k_o: f64, lambda: f64) -> Result<Self> {
        if data.len() != basis.len() {
            return Err(Error::invalid("one data value per snapshot window is required"));
        }
        if data.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("observation data must be finite"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda = {lambda} must be positive")));
        }
        if !(k_o > 0.0 && k_o.is_finite()) {
            return Err(Error::invalid(format!("k_o = {k_o} must be positive")));
        }
        Ok(MappingProblem { basis, data, k_o, lambda })
    }

    /// Builds the problem from cumulative observations; `lambda = None`
    /// selects [`default_lambda`].
    pub fn from_observations(
        basis: SnapshotBasis,
        series: &ObservationSeries,
        k_o: f64,
        lambda: Option<f64>,
    ) -> Result<Self> {
        let data = basis.rates(series);
        let lambda = match lambda {
            Some(l) => l,
            None => default_lambda(&basis, &data, k_o)?,
        };
        Self::new(basis, data, k_o, lambda)
    }
}

/// Estimate of the largest eigenvalue of `K* K + shift I` from `iters`
/// power iterations started at the constant field.
pub fn power_estimate(basis: &SnapshotBasis, k_o: f64, shift: f64, iters: usize) -> Result<f64> {
    let mut v = ScalarField::constant(*basis.grid(), 1.0);
    let mut estimate = shift;
    for _ in 0..iters {
        let norm = v.norm_sq().sqrt();
        if norm == 0.0 {
            break;
        }
        v.scale(1.0 / norm);
        let kv = apply_k(&v, basis, k_o)?;
        let mut av = apply_k_adjoint(&kv, basis, k_o)?;
        av.axpy(shift, &v);
        estimate = v.dot(&av);
        v = av;
    }
    Ok(estimate)
}

/// `lambda = 1e-3 * |d|^2 / |K|^2`, with `|K|^2` from 10 power iterations.
pub fn default_lambda(basis: &SnapshotBasis, data: &[f64], k_o: f64) -> Result<f64> {
    let k_norm_sq = power_estimate(basis, k_o, 0.0, 10)?;
    let d_norm_sq = time_dot(basis, data, data);
    if !(k_norm_sq > 0.0) || !(d_norm_sq > 0.0) {
        return Err(Error::invalid(
            "cannot choose a default lambda: the kernel or the data vanish; set lambda explicitly",
        ));
    }
    Ok(1e-3 * d_norm_sq / k_norm_sq)
}

/// `J(H)` and its gradient `K*(K H - d) + lambda H`.
pub fn objective_and_gradient(h: &ScalarField, problem: &MappingProblem) -> Result<(f64, ScalarField)> {
    let (j, residual) = objective_with_residual(h, problem)?;
    let mut grad = apply_k_adjoint(&residual, &problem.basis, problem.k_o)?;
    grad.axpy(problem.lambda, h);
    Ok((j, grad))
}

fn objective_with_residual(h: &ScalarField, problem: &MappingProblem) -> Result<(f64, Vec<f64>)> {
    let mut r = apply_k(h, &problem.basis, problem.k_o)?;
    for (ri, di) in r.iter_mut().zip(&problem.data) {
        *ri -= di;
    }
    let j = 0.5 * time_dot(&problem.basis, &r, &r) + 0.5 * problem.lambda * h.norm_sq();
    Ok((j, r))
}

/// Objective only.
pub fn objective(h: &ScalarField, problem: &MappingProblem) -> Result<f64> {
    objective_with_residual(h, problem).map(|(j, _)| j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseOptions {
    pub max_iters: usize,
    /// Stop once `(J_k - J_{k+1}) / J_k` falls below this.
    pub tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Step shrink factor on rejection.
    pub backtrack: f64,
}

impl Default for InverseOptions {
    fn default() -> Self {
        InverseOptions { max_iters: 5000, tol: 1e-14, armijo_c: 1e-4, backtrack: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct MappingResult {
    /// Relaxed estimate in `[0, 1]`.
    pub estimate: IndicatorField,
    /// `estimate` thresholded at 0.5.
    pub thresholded: IndicatorField,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Binary map: 1 where `h >= 0.5`.
pub fn threshold(h: &IndicatorField) -> IndicatorField {
    h.threshold()
}

/// Projected gradient descent with Armijo backtracking, from `init`.
pub fn solve_inverse(problem: &MappingProblem, init: &IndicatorField, opts: &InverseOptions) -> Result<MappingResult> {
    problem.basis.check_grid(init.grid())?;
    let lipschitz = power_estimate(&problem.basis, problem.k_o, problem.lambda, 10)?;
    let alpha0 = 1.0 / lipschitz;
    let mut h = init.field().clone();
    let (mut j, mut grad) = objective_and_gradient(&h, problem)?;
    if !j.is_finite() {
        return Err(Error::numerical("initial mapping objective is not finite"));
    }
    let mut history = vec![j];
    let mut alpha = alpha0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let mut step = (2.0 * alpha).max(alpha0);
        let accepted = loop {
            let trial = project_step(&h, &grad, step);
            let decrease: f64 =
                grad.values().iter().zip(trial.values()).zip(h.values()).map(|((g, t), x)| g * (t - x)).sum::<f64>()
                    * h.grid().cell_area();
            if decrease == 0.0 {
                break None;
            }
            let jt = objective(&trial, problem)?;
            if !jt.is_finite() {
                return Err(Error::numerical("mapping objective became non-finite"));
            }
            if jt <= j + opts.armijo_c * decrease {
                break Some((trial, jt));
            }
            step *= opts.backtrack;
            if step < 1e-20 * alpha0 {
                break None;
            }
        };
        let Some((trial, jt)) = accepted else {
            converged = true;
            break;
        };
        alpha = step;
        let rel = (j - jt) / j.abs().max(f64::MIN_POSITIVE);
        h = trial;
        j = jt;
        history.push(j);
        if rel < opts.tol {
            converged = true;
            break;
        }
        grad = objective_and_gradient(&h, problem)?.1;
    }
    let estimate = IndicatorField::project(h);
    let thresholded = estimate.threshold();
    Ok(MappingResult { estimate, thresholded, history, iterations, converged })
}

fn project_step(h: &ScalarField, grad: &ScalarField, step: f64) -> ScalarField {
    let values = h.values().iter().zip(grad.values()).map(|(x, g)| (x - step * g).clamp(0.0, 1.0)).collect();
    ScalarField::new(*h.grid(), values).expect("projected values are finite")
}
