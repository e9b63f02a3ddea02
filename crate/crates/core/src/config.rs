//! Scenario configuration: a sectioned TOML file with a fixed schema.
//!
//! ```toml
//! [domain]   x_lo, x_hi, y_lo, y_hi
//! [grid]     nx, ny
//! [physics]  D, k_o, k_f
//! [mapping]  enabled, T, lanes, speed, sigma, source, truth, max_iters, tol,
//!            optional: D, lambda, snapshots
//! [coverage] enabled, T, M, lambda, C, P, vmax, kmax, max_iters, tol,
//!            start_x, start_y, sigma, optional: D, density, y_min, region
//! [micro]    N, N_coverage, seed, validate, optional: dt
//! [output]   dir, dump_trajectories, optional: trajectory_stride
//! ```
//!
//! Unknown keys, duplicate keys and missing required keys are errors that
//! carry the offending line number.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::control::ControlBounds;
use crate::error::{Error, Result};
use crate::grid::{gaussian_density, Grid, IndicatorField, Rect, Region, ScalarField, TargetSpec};
use crate::macroscopic::PhysicalParams;

const SECTIONS: [&str; 7] = ["domain", "grid", "physics", "mapping", "coverage", "micro", "output"];

/// Bundled scenarios, by name.
pub const BUNDLED: [(&str, &str); 7] = [
    ("case1a", include_str!("../configs/case1a.toml")),
    ("case1b", include_str!("../configs/case1b.toml")),
    ("case2a", include_str!("../configs/case2a.toml")),
    ("case2b", include_str!("../configs/case2b.toml")),
    ("case3", include_str!("../configs/case3.toml")),
    ("desk", include_str!("../configs/desk.toml")),
    ("smoke", include_str!("../configs/smoke.toml")),
];

/// Text of the bundled scenario `name`.
pub fn bundled(name: &str) -> Result<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text).ok_or_else(|| {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        Error::invalid(format!("no bundled config `{name}`; available: {}", names.join(", ")))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub mapping: MappingConfig,
    pub coverage: CoverageConfig,
    pub micro: MicroConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Diffusion coefficient, m^2/s.
    #[serde(rename = "D")]
    pub diffusion: f64,
    /// Observation rate, 1/s.
    pub k_o: f64,
    /// Rate at which stopped agents resume moving, 1/s.
    pub k_f: f64,
}

/// Where the mapping stage gets its observation counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Simulated agents report their observations.
    Micro,
    /// Expected observations from the macroscopic model.
    Macro,
}

impl DataSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DataSource::Micro => "micro",
            DataSource::Macro => "macro",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingConfig {
    pub enabled: bool,
    /// Duration of the lawnmower sweep, s.
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Overrides `physics.D` during mapping.
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<f64>,
    /// Tikhonov weight; the data-scaled default is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub lanes: usize,
    /// Top speed available to the sweep, m/s.
    pub speed: f64,
    /// Number of equal observation windows; one per sweep segment when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<usize>,
    /// Spread of the agents around the sweep's start point, m.
    pub sigma: f64,
    pub source: DataSource,
    /// Ground-truth region, e.g. `disk:50,50,20` or `disk:30,70,15;rect:55,85,20,50`.
    pub truth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub enabled: bool,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Number of piecewise-constant control intervals.
    #[serde(rename = "M")]
    pub intervals: usize,
    /// Overrides `physics.D` during coverage.
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<f64>,
    pub lambda: f64,
    /// Target count for a partition cell lying inside the region.
    #[serde(rename = "C")]
    pub total: f64,
    /// Partition cells per axis.
    #[serde(rename = "P")]
    pub parts: usize,
    pub vmax: f64,
    pub kmax: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub start_x: f64,
    pub start_y: f64,
    pub sigma: f64,
    /// Target activity density on the region; `C / 50` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    /// Only ask for activity where `y >= y_min`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_min: Option<f64>,
    /// Region to cover instead of the mapped one. Without it and without
    /// mapping, the region must come from the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroConfig {
    /// Agents in the mapping run.
    #[serde(rename = "N")]
    pub agents: usize,
    /// Agents in the coverage validation run.
    #[serde(rename = "N_coverage")]
    pub agents_coverage: usize,
    /// Time step; derived from the macroscopic step limit and the rates when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub seed: u64,
    /// Run the coverage validation simulation.
    pub validate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub dump_trajectories: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_stride: Option<usize>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_error(text: &str, err: toml::de::Error) -> Error {
    let mut message = err.message().trim_end().to_string();
    // Some messages (e.g. "duplicate key") do not name the offending text.
    if let Some(snippet) = err.span().and_then(|s| text.get(s)).map(str::trim) {
        if !snippet.is_empty() && snippet.len() <= 40 && !snippet.contains('\n') && !message.contains(snippet) {
            message = format!("{message} `{snippet}`");
        }
    }
    Error::Parse { line: err.span().map(|s| line_of(text, s.start)), message }
}

/// Strict parse followed by [`ScenarioConfig::validate`].
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let table: toml::Table = text.parse().map_err(|e| parse_error(text, e))?;
    let missing: Vec<String> = SECTIONS.iter().filter(|s| !table.contains_key(**s)).map(|s| format!("[{s}]")).collect();
    if !missing.is_empty() {
        return Err(Error::Parse { line: None, message: format!("missing sections {}", missing.join(", ")) });
    }
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    /// Canonical TOML text; `parse_config(&cfg.render()) == cfg`.
    pub fn render(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        PhysicalParams::new(self.physics.diffusion, self.physics.k_o, self.physics.k_f)?;
        if self.seed_out_of_range() {
            return Err(Error::invalid("micro.seed must fit in a signed 64-bit integer"));
        }
        let m = &self.mapping;
        if m.enabled {
            positive("mapping.T", m.horizon)?;
            positive("mapping.speed", m.speed)?;
            positive("mapping.sigma", m.sigma)?;
            if let Some(d) = m.diffusion {
                PhysicalParams::new(d, self.physics.k_o, self.physics.k_f)?;
            }
            if let Some(l) = m.lambda {
                if !(l >= 0.0 && l.is_finite()) {
                    return Err(Error::invalid(format!("mapping.lambda must be >= 0, got {l}")));
                }
            }
            if m.lanes == 0 || m.snapshots == Some(0) || m.max_iters == 0 {
                return Err(Error::invalid("mapping.lanes, snapshots and max_iters must be at least 1"));
            }
            if m.source == DataSource::Micro && self.micro.agents == 0 {
                return Err(Error::invalid("micro.N must be at least 1 for micro-sourced mapping"));
            }
            Region::parse(&m.truth)?;
            crate::schedule::make_lawnmower(&grid.extent(), m.lanes, m.speed, m.horizon)?;
        }
        let c = &self.coverage;
        if c.enabled {
            positive("coverage.T", c.horizon)?;
            positive("coverage.C", c.total)?;
            positive("coverage.sigma", c.sigma)?;
            if c.intervals == 0 || c.max_iters == 0 {
                return Err(Error::invalid("coverage.M and max_iters must be at least 1"));
            }
            if !(c.lambda >= 0.0 && c.lambda.is_finite()) {
                return Err(Error::invalid(format!("coverage.lambda must be >= 0, got {}", c.lambda)));
            }
            if c.parts == 0 || grid.nx() % c.parts != 0 || grid.ny() % c.parts != 0 {
                return Err(Error::invalid(format!(
                    "coverage.P = {} must divide grid.nx = {} and grid.ny = {}",
                    c.parts,
                    grid.nx(),
                    grid.ny()
                )));
            }
            if let Some(d) = c.diffusion {
                PhysicalParams::new(d, self.physics.k_o, self.physics.k_f)?;
            }
            self.control_bounds()?;
            if !grid.extent().contains(c.start_x, c.start_y) {
                return Err(Error::invalid("coverage start point lies outside the domain"));
            }
            if let Some(r) = &c.region {
                Region::parse(r)?;
            }
            if self.micro.validate && self.micro.agents_coverage == 0 {
                return Err(Error::invalid("micro.N_coverage must be at least 1 when validating"));
            }
        }
        if let Some(dt) = self.micro.dt {
            positive("micro.dt", dt)?;
        }
        if self.output.trajectory_stride == Some(0) {
            return Err(Error::invalid("output.trajectory_stride must be at least 1"));
        }
        Ok(())
    }

    fn seed_out_of_range(&self) -> bool {
        i64::try_from(self.micro.seed).is_err()
    }

    pub fn grid(&self) -> Result<Grid> {
        let d = self.domain;
        Grid::new(Rect::new(d.x_lo, d.x_hi, d.y_lo, d.y_hi), self.grid.nx, self.grid.ny)
    }

    pub fn mapping_params(&self) -> Result<PhysicalParams> {
        let d = self.mapping.diffusion.unwrap_or(self.physics.diffusion);
        PhysicalParams::new(d, self.physics.k_o, self.physics.k_f)
    }

    pub fn coverage_params(&self) -> Result<PhysicalParams> {
        let d = self.coverage.diffusion.unwrap_or(self.physics.diffusion);
        PhysicalParams::new(d, self.physics.k_o, self.physics.k_f)
    }

    pub fn truth(&self) -> Result<IndicatorField> {
        Ok(IndicatorField::from_region(self.grid()?, &Region::parse(&self.mapping.truth)?))
    }

    /// `coverage.region` rasterised, if given.
    pub fn coverage_region(&self) -> Result<Option<IndicatorField>> {
        match &self.coverage.region {
            Some(r) => Ok(Some(IndicatorField::from_region(self.grid()?, &Region::parse(r)?))),
            None => Ok(None),
        }
    }

    pub fn control_bounds(&self) -> Result<ControlBounds> {
        ControlBounds::symmetric(self.coverage.vmax, self.coverage.kmax)
    }

    pub fn target_spec(&self) -> TargetSpec {
        TargetSpec { total: self.coverage.total, density: self.coverage.density, y_min: self.coverage.y_min }
    }

    /// Initial density of the coverage run.
    pub fn coverage_initial(&self) -> Result<ScalarField> {
        let c = &self.coverage;
        gaussian_density(self.grid()?, (c.start_x, c.start_y), c.sigma)
    }

    /// SHA-256 of the rendered config, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_config_parses() {
        for (name, text) in BUNDLED {
            let cfg = parse_config(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(parse_config(&cfg.render()).unwrap(), cfg, "{name}");
        }
    }

    #[test]
    fn case1a_uses_paper_values() {
        let cfg = parse_config(bundled("case1a").unwrap()).unwrap();
        assert_eq!(cfg.coverage.total, 450.0);
        assert_eq!(cfg.coverage.parts, 20);
        assert_eq!(cfg.mapping_params().unwrap().diffusion, 1e-4);
        assert_eq!(cfg.coverage_params().unwrap().diffusion, 5e-4);
        assert_eq!(cfg.micro.agents, 30);
        assert_eq!(cfg.micro.agents_coverage, 1000);
    }

    #[test]
    fn line_numbers_point_at_the_problem() {
        let text = bundled("smoke").unwrap().replace("nx = 20", "nx = 20\nwidth = 3");
        let err = parse_config(&text).unwrap_err();
        let line = text.lines().position(|l| l.starts_with("width")).unwrap() + 1;
        match err {
            Error::Parse { line: Some(l), message } => {
                assert_eq!(l, line);
                assert!(message.contains("width"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_bundle_lists_names() {
        let err = bundled("nope").unwrap_err().to_string();
        assert!(err.contains("case1a") && err.contains("desk"), "{err}");
    }
}
