//! Simulates growing swarms and shows the empirical density of moving agents
//! approaching the macroscopic prediction.

use swarm_pde::control::ControlBounds;
use swarm_pde::grid::{gaussian_density, Grid, IndicatorField, Rect, Region};
use swarm_pde::macroscopic::{solve_coverage_model, PhysicalParams, SolverOptions};
use swarm_pde::microscopic::{empirical_density, simulate_ensemble, InitialPositions, SimConfig, SimMode, SwitchRule};
use swarm_pde::ControlSignal;

fn main() -> swarm_pde::Result<()> {
    let grid = Grid::new(Rect::new(0.0, 100.0, 0.0, 100.0), 25, 25)?;
    let region = IndicatorField::from_region(grid, &Region::parse("disk:55,50,15")?);
    let params = PhysicalParams::new(0.25, 0.0, 0.1)?;
    let (center, sigma) = ((40.0, 40.0), 4.0);
    let control = ControlSignal::uniform(40.0, 2, [0.0, 0.0, 0.05], ControlBounds::symmetric(1.0, 1.0)?)?;
    let y0 = gaussian_density(grid, center, sigma)?;
    let sol = solve_coverage_model(&region, &control, &params, &y0, &[], &SolverOptions::default())?;
    let expected = &sol.final_state().y1;

    println!("{:>7} {:>10} {:>8}", "agents", "L1", "events");
    for agents in [100, 1000, 10_000] {
        let cfg = SimConfig {
            agents,
            dt: 0.05,
            horizon: 40.0,
            mode: SimMode::Coverage,
            params,
            control: control.clone(),
            region: region.clone(),
            seed: 11,
            initial: InitialPositions::Gaussian { center, sigma },
            switch_rule: SwitchRule::FirstOrder,
            sample_times: vec![40.0],
            trajectory_stride: None,
        };
        let out = simulate_ensemble(&cfg)?;
        let moving: Vec<(f64, f64)> = out.final_states.iter().filter(|s| s.moving).map(|s| s.position).collect();
        let density = empirical_density(&moving, &grid, agents)?;
        println!("{agents:>7} {:>10.4} {:>8}", density.l1_distance(expected), out.events.len());
    }
    Ok(())
}
