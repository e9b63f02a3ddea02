//! End-to-end runs: mapping, thresholding, coverage optimisation and agent
//! validation, with every artifact written to a fresh run directory and
//! listed in `manifest.json` with its SHA-256.
//!
//! Nothing timing- or thread-dependent is written, so a rerun with the same
//! config and seed produces byte-identical files.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{DataSource, ScenarioConfig};
use crate::control::{ControlBounds, ControlSignal};
use crate::coverage::{
    activity_target, finite_difference_check, optimize_coverage, partial_horizon_objective, reduced_objective,
    terminal_misfit, CoverageProblem, CoverageResult, FdSample, OptimizeOptions,
};
use crate::error::{Error, Result};
use crate::grid::{gaussian_density, Grid, IndicatorField, ScalarField};
use crate::io;
use crate::macroscopic::{solve_mapping_model, stable_dt, PhysicalParams, SolverOptions};
use crate::mapping::{solve_inverse, InverseOptions, MappingProblem, MappingResult, SnapshotBasis};
use crate::microscopic::{
    empirical_density, simulate_ensemble, EventKind, InitialPositions, SimConfig, SimMode, SimOutput, SwitchRule,
};
use crate::observations::ObservationSeries;
use crate::schedule::{make_lawnmower, VelocitySchedule};

/// A run directory and the files written into it so far.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config_sha256: &'a str,
    seeds: Seeds,
    data_source: Option<&'static str>,
    files: Vec<FileEntry>,
}

#[derive(Debug, Serialize)]
struct Seeds {
    mapping: u64,
    validation: u64,
}

impl RunDir {
    /// Creates `<base>/<hash8>-<unix seconds>`, adding a numeric suffix if
    /// that directory already exists.
    pub fn create(base: &Path, config_hash: &str) -> Result<Self> {
        std::fs::create_dir_all(base)?;
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let stem = format!("{}-{ts}", &config_hash[..8.min(config_hash.len())]);
        let mut root = base.join(&stem);
        let mut n = 1;
        loop {
            match std::fs::create_dir(&root) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    root = base.join(format!("{stem}-{n}"));
                    n += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(RunDir { root, files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Runs `write` on `<root>/<name>` and records the file.
    pub fn write(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        write(&self.root.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn field(&mut self, name: &str, field: &ScalarField) -> Result<()> {
        self.write(name, |p| io::write_field(p, field))
    }

    fn finish(self, cfg: &ScenarioConfig, data_source: Option<&'static str>) -> Result<PathBuf> {
        let mut names = self.files.clone();
        names.sort();
        names.dedup();
        let files = names
            .into_iter()
            .map(|path| {
                let bytes = std::fs::read(self.root.join(&path))?;
                Ok(FileEntry { sha256: hex::encode(Sha256::digest(&bytes)), bytes: bytes.len() as u64, path })
            })
            .collect::<Result<Vec<_>>>()?;
        let hash = cfg.hash();
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: &hash,
            seeds: Seeds { mapping: mapping_seed(cfg), validation: validation_seed(cfg) },
            data_source,
            files,
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        io::write_text(&self.root.join("manifest.json"), &text)?;
        Ok(self.root)
    }
}

fn mapping_seed(cfg: &ScenarioConfig) -> u64 {
    cfg.micro.seed
}

fn validation_seed(cfg: &ScenarioConfig) -> u64 {
    cfg.micro.seed.wrapping_add(1)
}

/// Agent time step: `micro.dt` if set, otherwise the macroscopic step limit
/// shrunk until `dt * max_rate <= 0.1`.
pub fn micro_dt(cfg: &ScenarioConfig, bounds: &ControlBounds, params: &PhysicalParams, max_rate: f64) -> Result<f64> {
    if let Some(dt) = cfg.micro.dt {
        return Ok(dt);
    }
    let macro_dt = stable_dt(bounds, params, &cfg.grid()?, SolverOptions::default().dt_max);
    Ok(if max_rate > 0.0 { macro_dt.min(0.1 / max_rate) } else { macro_dt })
}

fn equal_windows(horizon: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| horizon * i as f64 / count as f64).collect()
}

/// The lawnmower sweep described by `[mapping]`.
pub fn mapping_schedule(cfg: &ScenarioConfig) -> Result<VelocitySchedule> {
    let m = &cfg.mapping;
    make_lawnmower(&cfg.grid()?.extent(), m.lanes, m.speed, m.horizon)
}

/// Observation window edges: `snapshots` equal windows, or the sweep's
/// segment boundaries.
pub fn mapping_windows(cfg: &ScenarioConfig, schedule: &VelocitySchedule) -> Vec<f64> {
    match cfg.mapping.snapshots {
        Some(s) => equal_windows(cfg.mapping.horizon, s),
        None => schedule.breaks(),
    }
}

fn mapping_sim_config(
    cfg: &ScenarioConfig,
    schedule: &VelocitySchedule,
    truth: &IndicatorField,
    sample_times: Vec<f64>,
) -> Result<SimConfig> {
    let params = cfg.mapping_params()?;
    let control = schedule.to_control()?;
    Ok(SimConfig {
        agents: cfg.micro.agents,
        dt: micro_dt(cfg, control.bounds(), &params, params.obs_rate)?,
        horizon: cfg.mapping.horizon,
        mode: SimMode::Mapping,
        params,
        control,
        region: truth.clone(),
        seed: mapping_seed(cfg),
        initial: InitialPositions::Gaussian { center: schedule.start(), sigma: cfg.mapping.sigma },
        switch_rule: SwitchRule::FirstOrder,
        sample_times,
        trajectory_stride: trajectory_stride(cfg),
    })
}

fn trajectory_stride(cfg: &ScenarioConfig) -> Option<usize> {
    cfg.output.dump_trajectories.then_some(cfg.output.trajectory_stride.unwrap_or(1))
}

fn write_sim(out: &mut RunDir, suffix: &str, sim: &SimOutput) -> Result<()> {
    out.write(&format!("events_{suffix}.csv"), |p| io::write_events(p, &sim.events))?;
    if let Some(rows) = &sim.trajectories {
        out.write(&format!("agents_{suffix}.csv"), |p| io::write_agent_paths(p, rows))?;
    }
    Ok(())
}

/// Result of the mapping stage.
#[derive(Debug, Clone)]
pub struct MappingOutcome {
    pub truth: IndicatorField,
    pub observations: ObservationSeries,
    pub lambda: f64,
    pub result: MappingResult,
    /// Misclassified area of the thresholded map, as a fraction of the domain.
    pub misclassified: f64,
}

/// Sweeps the truth region, collects observation counts (from agents or from
/// the macroscopic model) and solves the regularised inverse problem.
pub fn run_mapping(cfg: &ScenarioConfig, out: &mut RunDir) -> Result<MappingOutcome> {
    let m = &cfg.mapping;
    let grid = cfg.grid()?;
    let params = cfg.mapping_params()?;
    let truth = cfg.truth()?;
    let schedule = mapping_schedule(cfg)?;
    let control = schedule.to_control()?;
    let edges = mapping_windows(cfg, &schedule);
    let y0 = gaussian_density(grid, schedule.start(), m.sigma)?;
    let sol = solve_mapping_model(&truth, &control, &params, &y0, &edges, &SolverOptions::default())?;
    let basis = SnapshotBasis::from_solution(&sol)?;
    let observations = match m.source {
        DataSource::Macro => {
            out.write("observations.csv", |p| io::write_series(p, "g", &sol.observations))?;
            sol.observations.clone()
        }
        DataSource::Micro => {
            let sim = simulate_ensemble(&mapping_sim_config(cfg, &schedule, &truth, edges.clone())?)?;
            out.write("observations.csv", |p| io::write_series(p, "g_hat", &sim.g_hat))?;
            write_sim(out, "mapping", &sim)?;
            sim.g_hat
        }
    };
    let problem = MappingProblem::from_observations(basis, &observations, params.obs_rate, m.lambda)?;
    log::info!("mapping: {} windows, lambda = {:.4e}", problem.basis.len(), problem.lambda);
    let opts = InverseOptions { max_iters: m.max_iters, tol: m.tol, ..InverseOptions::default() };
    let result = solve_inverse(&problem, &IndicatorField::zeros(grid), &opts)?;
    log::info!(
        "mapping: {} iterations, J = {:.10e}, converged = {}",
        result.iterations,
        result.history.last().copied().unwrap_or(f64::NAN),
        result.converged
    );
    let misclassified = result.thresholded.mismatch_area(&truth) / grid.extent().area();
    out.field("H_true.csv", truth.field())?;
    out.field("H_hat.csv", result.estimate.field())?;
    out.field("H_thresh.csv", result.thresholded.field())?;
    out.write("objective_history.csv", |p| io::write_history(p, &result.history))?;
    Ok(MappingOutcome { truth, observations, lambda: problem.lambda, result, misclassified })
}

/// Coverage problem on `region` as described by `[coverage]`.
pub fn coverage_problem(cfg: &ScenarioConfig, region: IndicatorField) -> Result<CoverageProblem> {
    let c = &cfg.coverage;
    let target = activity_target(&region, cfg.target_spec(), c.parts)?;
    CoverageProblem::activity_target(
        region,
        cfg.coverage_params()?,
        cfg.coverage_initial()?,
        c.horizon,
        target,
        c.lambda,
        cfg.control_bounds()?,
        c.intervals,
    )
}

/// Result of the coverage stage.
#[derive(Debug, Clone)]
pub struct CoverageOutcome {
    pub problem: CoverageProblem,
    pub result: CoverageResult,
}

/// Optimises the controls from `u = 0` and writes controls, objective
/// histories and the terminal densities.
pub fn run_coverage(cfg: &ScenarioConfig, region: IndicatorField, out: &mut RunDir) -> Result<CoverageOutcome> {
    let c = &cfg.coverage;
    let problem = coverage_problem(cfg, region)?;
    let u0 = problem.constant_control([0.0, 0.0, 0.0])?;
    let opts = OptimizeOptions { max_iters: c.max_iters, tol: c.tol, ..OptimizeOptions::default() };
    let result = optimize_coverage(&u0, &problem, &opts)?;
    out.field("H_coverage.csv", problem.region.field())?;
    out.field("y3_target.csv", problem.target.component(2))?;
    out.write("controls.csv", |p| io::write_controls(p, &result.control))?;
    out.write("J_history.csv", |p| io::write_history(p, &result.history))?;
    let partial: Vec<Vec<f64>> = partial_horizon_objective(&result.control, &result.solution, &problem)
        .into_iter()
        .map(|(t, j)| vec![t, j])
        .collect();
    out.write("J_vs_t.csv", |p| io::write_table(p, &["t", "J"], &partial))?;
    let fin = result.solution.final_state();
    for (k, label) in ["y1", "y2", "y3"].iter().enumerate() {
        out.field(&io::field_file_name(label, c.horizon), fin.component(k))?;
    }
    Ok(CoverageOutcome { problem, result })
}

/// Agent-level check of optimised controls.
#[derive(Debug, Clone)]
pub struct ValidationOutcome {
    pub agents: usize,
    /// Empirical activity density (`activity_start` events per agent per area).
    pub activity: ScalarField,
    /// `integral |y3_micro - y3_macro|`.
    pub l1_to_macro: f64,
    /// Terminal misfit of the empirical activity.
    pub misfit: f64,
}

fn coverage_sim_config(cfg: &ScenarioConfig, problem: &CoverageProblem, control: &ControlSignal) -> Result<SimConfig> {
    let k_peak = control.values().iter().map(|u| u[2]).fold(problem.params.resume_rate, f64::max);
    Ok(SimConfig {
        agents: cfg.micro.agents_coverage,
        dt: micro_dt(cfg, control.bounds(), &problem.params, k_peak)?,
        horizon: problem.horizon,
        mode: SimMode::Coverage,
        params: problem.params,
        control: control.clone(),
        region: problem.region.clone(),
        seed: validation_seed(cfg),
        initial: InitialPositions::Gaussian {
            center: (cfg.coverage.start_x, cfg.coverage.start_y),
            sigma: cfg.coverage.sigma,
        },
        switch_rule: SwitchRule::FirstOrder,
        sample_times: vec![problem.horizon],
        trajectory_stride: trajectory_stride(cfg),
    })
}

/// Simulates `micro.N_coverage` agents under the optimised controls and
/// compares their activity with the macroscopic prediction.
pub fn run_validation(cfg: &ScenarioConfig, cov: &CoverageOutcome, out: &mut RunDir) -> Result<ValidationOutcome> {
    let problem = &cov.problem;
    let sim = simulate_ensemble(&coverage_sim_config(cfg, problem, &cov.result.control)?)?;
    let activity =
        empirical_density(&sim.event_positions(EventKind::ActivityStart), problem.grid(), cfg.micro.agents_coverage)?;
    let macro_y3 = cov.result.solution.final_state().component(2);
    let l1_to_macro = activity.l1_distance(macro_y3);
    let mut state = cov.result.solution.final_state().clone();
    *state.components_mut()[2] = activity.clone();
    let misfit = terminal_misfit(&state, problem);
    write_sim(out, "coverage", &sim)?;
    out.field(&io::field_file_name("y3_micro", problem.horizon), &activity)?;
    log::info!("validation: L1(y3 micro, macro) = {l1_to_macro:.4e}");
    Ok(ValidationOutcome { agents: cfg.micro.agents_coverage, activity, l1_to_macro, misfit })
}

#[derive(Debug, Default, Serialize)]
struct Summary {
    mapping: Option<MappingSummary>,
    coverage: Option<CoverageSummary>,
    validation: Option<ValidationSummary>,
}

#[derive(Debug, Serialize)]
struct MappingSummary {
    data_source: &'static str,
    windows: usize,
    lambda: f64,
    iterations: usize,
    converged: bool,
    objective: f64,
    misclassified_fraction: f64,
}

#[derive(Debug, Serialize)]
struct CoverageSummary {
    iterations: usize,
    converged: bool,
    initial_objective: f64,
    final_objective: f64,
}

#[derive(Debug, Serialize)]
struct ValidationSummary {
    agents: usize,
    l1_to_macro: f64,
    misfit: f64,
}

/// Everything a pipeline run produced.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub dir: PathBuf,
    pub mapping: Option<MappingOutcome>,
    pub coverage: Option<CoverageOutcome>,
    pub validation: Option<ValidationOutcome>,
}

/// [`run_pipeline_with_region`] without an externally supplied region.
pub fn run_pipeline(cfg: &ScenarioConfig) -> Result<PipelineOutcome> {
    run_pipeline_with_region(cfg, None)
}

/// Runs the enabled stages in order. The coverage region is, by priority,
/// `region`, `coverage.region`, or the thresholded map from this run.
pub fn run_pipeline_with_region(cfg: &ScenarioConfig, region: Option<IndicatorField>) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let mut out = RunDir::create(&cfg.output.dir, &cfg.hash())?;
    log::info!("writing to {}", out.path().display());
    out.write("config.toml", |p| io::write_text(p, &cfg.render()))?;
    let mut summary = Summary::default();

    let mapping = if cfg.mapping.enabled {
        let m = run_mapping(cfg, &mut out).map_err(|e| e.in_stage("mapping"))?;
        summary.mapping = Some(MappingSummary {
            data_source: cfg.mapping.source.as_str(),
            windows: mapping_windows(cfg, &mapping_schedule(cfg)?).len() - 1,
            lambda: m.lambda,
            iterations: m.result.iterations,
            converged: m.result.converged,
            objective: m.result.history.last().copied().unwrap_or(f64::NAN),
            misclassified_fraction: m.misclassified,
        });
        Some(m)
    } else {
        None
    };

    let (coverage, validation) = if cfg.coverage.enabled {
        let region = match (region, cfg.coverage_region()?, &mapping) {
            (Some(r), _, _) | (None, Some(r), _) => r,
            (None, None, Some(m)) => m.result.thresholded.clone(),
            (None, None, None) => {
                return Err(Error::invalid("no region to cover: enable mapping, set coverage.region or pass a map")
                    .in_stage("coverage"))
            }
        };
        let cov = run_coverage(cfg, region, &mut out).map_err(|e| e.in_stage("coverage"))?;
        summary.coverage = Some(CoverageSummary {
            iterations: cov.result.iterations,
            converged: cov.result.converged,
            initial_objective: cov.result.history[0],
            final_objective: *cov.result.history.last().expect("history is never empty"),
        });
        let val = if cfg.micro.validate {
            let v = run_validation(cfg, &cov, &mut out).map_err(|e| e.in_stage("validation"))?;
            summary.validation =
                Some(ValidationSummary { agents: v.agents, l1_to_macro: v.l1_to_macro, misfit: v.misfit });
            Some(v)
        } else {
            None
        };
        (Some(cov), val)
    } else {
        (None, None)
    };

    let text = serde_json::to_string_pretty(&summary)? + "\n";
    out.write("summary.json", |p| io::write_text(p, &text))?;
    let source = cfg.mapping.enabled.then(|| cfg.mapping.source.as_str());
    let dir = out.finish(cfg, source)?;
    Ok(PipelineOutcome { dir, mapping, coverage, validation })
}

/// Which dynamics a standalone simulation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationKind {
    /// Lawnmower sweep over the truth region, reporting observations.
    Mapping,
    /// Coverage controls (zero if none are given) on the coverage region.
    Coverage,
}

/// Runs the agent simulator alone and writes events, `g_hat` and (if
/// requested) agent paths.
pub fn run_simulation(
    cfg: &ScenarioConfig,
    kind: SimulationKind,
    controls: Option<ControlSignal>,
    region: Option<IndicatorField>,
) -> Result<PathBuf> {
    cfg.validate()?;
    let mut out = RunDir::create(&cfg.output.dir, &cfg.hash())?;
    out.write("config.toml", |p| io::write_text(p, &cfg.render()))?;
    match kind {
        SimulationKind::Mapping => {
            let schedule = mapping_schedule(cfg)?;
            let edges = mapping_windows(cfg, &schedule);
            let sim = simulate_ensemble(&mapping_sim_config(cfg, &schedule, &cfg.truth()?, edges)?)?;
            out.write("observations.csv", |p| io::write_series(p, "g_hat", &sim.g_hat))?;
            write_sim(&mut out, "mapping", &sim)?;
        }
        SimulationKind::Coverage => {
            let region = match (region, cfg.coverage_region()?) {
                (Some(r), _) | (None, Some(r)) => r,
                (None, None) => cfg.truth()?,
            };
            let problem = coverage_problem(cfg, region)?;
            let u = match controls {
                Some(u) => u,
                None => problem.constant_control([0.0, 0.0, 0.0])?,
            };
            let sim = simulate_ensemble(&coverage_sim_config(cfg, &problem, &u)?)?;
            let activity = empirical_density(
                &sim.event_positions(EventKind::ActivityStart),
                problem.grid(),
                cfg.micro.agents_coverage,
            )?;
            write_sim(&mut out, "coverage", &sim)?;
            out.field(&io::field_file_name("y3_micro", problem.horizon), &activity)?;
        }
    }
    out.finish(cfg, None)
}

/// Control with every channel drawn uniformly from the middle 80% of its
/// bounds, so small perturbations stay admissible.
pub fn random_control(horizon: f64, intervals: usize, bounds: ControlBounds, seed: u64) -> Result<ControlSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..intervals)
        .map(|_| {
            std::array::from_fn(|c| {
                let (lo, hi) = (bounds.lower[c], bounds.upper[c]);
                lo + (hi - lo) * rng.random_range(0.1..=0.9)
            })
        })
        .collect();
    ControlSignal::uniform(horizon, intervals, bounds.clamp([0.0; 3]), bounds)?.with_values(values)
}

/// Directions with entries uniform in `[-1, 1]`.
pub fn random_directions(intervals: usize, count: usize, seed: u64) -> Vec<Vec<[f64; 3]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..intervals).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..=1.0))).collect())
        .collect()
}

/// Finite-difference check of the coverage gradient at a random control.
#[derive(Debug, Clone)]
pub struct GradientCheck {
    pub samples: Vec<FdSample>,
    pub form_discrepancy: f64,
    pub objective: f64,
}

/// Compares the adjoint gradient with central differences along `directions`
/// random directions, at a random control drawn from `seed`.
pub fn run_gradient_check(
    cfg: &ScenarioConfig,
    region: IndicatorField,
    directions: usize,
    eps: f64,
    seed: u64,
) -> Result<GradientCheck> {
    let problem = coverage_problem(cfg, region)?;
    let u = random_control(problem.horizon, problem.intervals, problem.bounds, seed)?;
    let dirs = random_directions(problem.intervals, directions, seed.wrapping_add(1));
    let (report, samples) = finite_difference_check(&u, &problem, &dirs, eps)?;
    let (objective, _) = reduced_objective(&u, &problem)?;
    Ok(GradientCheck { samples, form_discrepancy: report.form_discrepancy, objective })
}

/// Region used by standalone coverage commands: `coverage.region`, else the
/// mapping truth.
pub fn default_coverage_region(cfg: &ScenarioConfig) -> Result<IndicatorField> {
    match cfg.coverage_region()? {
        Some(r) => Ok(r),
        None => cfg.truth(),
    }
}

/// Reads a map CSV and checks it lives on the configured grid.
pub fn load_region(cfg: &ScenarioConfig, path: &Path) -> Result<IndicatorField> {
    let field = io::read_field(path)?;
    let grid: Grid = cfg.grid()?;
    if field.grid() != &grid {
        return Err(Error::invalid(format!(
            "{} is on a {}x{} grid, config expects {}x{}",
            path.display(),
            field.grid().nx(),
            field.grid().ny(),
            grid.nx(),
            grid.ny()
        )));
    }
    Ok(IndicatorField::project(field))
}
