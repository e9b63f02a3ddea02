//! Integrates the coverage model under a constant control and reports how
//! agent mass splits between moving, stopped and accumulated activity.

use swarm_pde::control::ControlBounds;
use swarm_pde::grid::{gaussian_density, Grid, IndicatorField, Rect, Region};
use swarm_pde::macroscopic::{solve_coverage_model, PhysicalParams, SolverOptions};
use swarm_pde::ControlSignal;

fn main() -> swarm_pde::Result<()> {
    let grid = Grid::new(Rect::new(0.0, 100.0, 0.0, 100.0), 50, 50)?;
    let region = IndicatorField::from_region(grid, &Region::parse("disk:60,60,20")?);
    let params = PhysicalParams::new(5e-4, 0.0, 0.1)?;
    let y0 = gaussian_density(grid, (20.0, 20.0), 5.0)?;
    let bounds = ControlBounds::symmetric(2.0, 10.0)?;
    let u = ControlSignal::uniform(100.0, 4, [0.4, 0.4, 0.5], bounds)?;
    let times: Vec<f64> = (0..=10).map(|k| 10.0 * k as f64).collect();
    let sol = solve_coverage_model(&region, &u, &params, &y0, &times, &SolverOptions::default())?;

    println!("{} time steps", sol.steps());
    println!("{:>6} {:>10} {:>10} {:>12} {:>10}", "t", "moving", "stopped", "moving+stop", "activity");
    for (t, s) in sol.trajectory.times.iter().zip(&sol.trajectory.states) {
        let (m1, m2, m3) = (s.y1.integrate(), s.y2.integrate(), s.y3.integrate());
        println!("{t:>6.1} {m1:>10.6} {m2:>10.6} {:>12.9} {m3:>10.6}", m1 + m2);
    }
    Ok(())
}
