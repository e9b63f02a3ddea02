//! Mean-field (macroscopic) models: the mapping model, the coverage model and
//! the time-reversed adjoint of the coverage model.

mod adjoint;
mod rhs;
mod solver;

pub(crate) use adjoint::adjoint_sweep;
pub use adjoint::{solve_adjoint, terminal_adjoint, AdjointTrajectory};
pub use rhs::adr_rhs;
pub use solver::{
    positivity_dt, solve_coverage_model, solve_mapping_model, stable_dt, step_limit, CoverageSolution, MappingSolution,
    SolverOptions,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

/// Diffusion and reaction constants shared by all models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Diffusion coefficient `D` in m^2/s.
    pub diffusion: f64,
    /// Observation rate `k_o` in 1/s.
    pub obs_rate: f64,
    /// Resume-motion rate `k_f` in 1/s.
    pub resume_rate: f64,
}

impl PhysicalParams {
    pub fn new(diffusion: f64, obs_rate: f64, resume_rate: f64) -> Result<Self> {
        let p = PhysicalParams { diffusion, obs_rate, resume_rate };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("D", self.diffusion), ("k_o", self.obs_rate), ("k_f", self.resume_rate)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Which right-hand side [`adr_rhs`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Moving density `y1` and accumulated observations `y2`.
    Mapping,
    /// Moving, stopped and activity densities.
    Coverage,
    /// Adjoint `(p1, p2, p3)` in reversed time.
    AdjointTransformed,
}

/// The fields `(y1, y2, y3)` on one grid at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDensities {
    pub y1: ScalarField,
    pub y2: ScalarField,
    pub y3: ScalarField,
}

impl StateDensities {
    /// Panics if the fields live on different grids.
    pub fn new(y1: ScalarField, y2: ScalarField, y3: ScalarField) -> Self {
        assert!(y1.grid() == y2.grid() && y1.grid() == y3.grid(), "state fields must share one grid");
        StateDensities { y1, y2, y3 }
    }

    /// `y1 = y0`, `y2 = y3 = 0`.
    pub fn initial(y0: ScalarField) -> Self {
        let g = *y0.grid();
        StateDensities::new(y0, ScalarField::zeros(g), ScalarField::zeros(g))
    }

    pub fn zeros(grid: Grid) -> Self {
        StateDensities::new(ScalarField::zeros(grid), ScalarField::zeros(grid), ScalarField::zeros(grid))
    }

    pub fn grid(&self) -> &Grid {
        self.y1.grid()
    }

    pub fn component(&self, c: usize) -> &ScalarField {
        match c {
            0 => &self.y1,
            1 => &self.y2,
            2 => &self.y3,
            _ => panic!("state has three components, asked for {c}"),
        }
    }

    pub(crate) fn components_mut(&mut self) -> [&mut ScalarField; 3] {
        [&mut self.y1, &mut self.y2, &mut self.y3]
    }

    pub fn is_finite(&self) -> bool {
        self.y1.is_finite() && self.y2.is_finite() && self.y3.is_finite()
    }

    pub fn min(&self) -> f64 {
        self.y1.min().min(self.y2.min()).min(self.y3.min())
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid() != grid {
            return Err(Error::invalid("state and indicator live on different grids"));
        }
        Ok(())
    }
}

/// Snapshots of the state at increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateDensities>,
}

impl DensityTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&StateDensities> {
        self.states.last()
    }

    /// Snapshot taken at time `t` (exact match within 1e-9 s).
    pub fn at_time(&self, t: f64) -> Option<&StateDensities> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9).map(|k| &self.states[k])
    }
}
