//! Density-based mapping and coverage control for stochastic robot swarms.
//!
//! Robots move by drift plus Brownian motion and switch between moving and
//! stopped states. Their expected densities obey advection-diffusion-reaction
//! equations, which this crate uses for two tasks:
//!
//! * [`mapping`]: recover the indicator of an unknown region from the times
//!   at which unlocalised robots report observations.
//! * [`coverage`]: compute open-loop velocity and stopping-rate controls that
//!   make the robots' activity match a target distribution.
//!
//! [`macroscopic`] holds the PDE solvers, [`microscopic`] the agent-based
//! simulator used to produce data and to validate controls.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod coverage;
pub mod error;
pub mod grid;
pub mod io;
pub mod macroscopic;
pub mod mapping;
pub mod microscopic;
pub mod observations;
pub mod pipeline;
pub mod schedule;

pub use control::{project_controls, ControlBounds, ControlSignal};
pub use error::{Error, Result};
pub use grid::{Grid, IndicatorField, Rect, Region, ScalarField};
pub use macroscopic::{PhysicalParams, StateDensities};
pub use observations::ObservationSeries;
