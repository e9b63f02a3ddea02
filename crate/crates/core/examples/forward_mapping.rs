//! Sweeps a lawnmower path over a disk-shaped region and prints the expected
//! observation count `g(t)` per agent from the macroscopic mapping model.

use swarm_pde::grid::{gaussian_density, Grid, IndicatorField, Rect, Region};
use swarm_pde::macroscopic::{solve_mapping_model, PhysicalParams, SolverOptions};
use swarm_pde::schedule::make_lawnmower;

fn main() -> swarm_pde::Result<()> {
    let domain = Rect::new(0.0, 100.0, 0.0, 100.0);
    let grid = Grid::new(domain, 50, 50)?;
    let region = IndicatorField::from_region(grid, &Region::parse("disk:50,50,20")?);
    let schedule = make_lawnmower(&domain, 10, 5.0, 400.0)?;
    let control = schedule.to_control()?;
    let params = PhysicalParams::new(1e-4, 100.0, 0.0)?;
    let y0 = gaussian_density(grid, schedule.start(), 0.5)?;
    let times: Vec<f64> = (0..=20).map(|k| 20.0 * k as f64).collect();
    let sol = solve_mapping_model(&region, &control, &params, &y0, &times, &SolverOptions::default())?;

    println!("lawnmower: {} segments, start {:?}", schedule.segments().len(), schedule.start());
    println!("{:>8} {:>12} {:>12}", "t", "g(t)", "mass y1");
    for ((t, g), state) in times.iter().zip(sol.observations.values()).zip(&sol.trajectory.states) {
        println!("{t:>8.1} {g:>12.4} {:>12.9}", state.y1.integrate());
    }
    Ok(())
}
