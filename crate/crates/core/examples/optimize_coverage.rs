//! Optimises velocity and stopping-rate controls so that activity
//! accumulates uniformly on a disk, starting from `u = 0`.

use swarm_pde::control::ControlBounds;
use swarm_pde::coverage::{optimize_coverage, CoverageProblem, OptimizeOptions};
use swarm_pde::grid::{gaussian_density, partition_targets, Grid, IndicatorField, Rect, Region, TargetSpec};
use swarm_pde::macroscopic::PhysicalParams;

fn main() -> swarm_pde::Result<()> {
    let grid = Grid::new(Rect::new(0.0, 100.0, 0.0, 100.0), 30, 30)?;
    let region = IndicatorField::from_region(grid, &Region::parse("disk:40,40,20")?);
    let (_, target) = partition_targets(&region, 10, TargetSpec::new(0.5))?;
    let problem = CoverageProblem::activity_target(
        region,
        PhysicalParams::new(5e-4, 0.0, 0.1)?,
        gaussian_density(grid, (20.0, 20.0), 8.0)?,
        60.0,
        target,
        1e-6,
        ControlBounds::symmetric(2.0, 10.0)?,
        20,
    )?;
    let u0 = problem.constant_control([0.0, 0.0, 0.0])?;
    let opts = OptimizeOptions { max_iters: 25, ..OptimizeOptions::default() };
    let result = optimize_coverage(&u0, &problem, &opts)?;

    for (i, j) in result.history.iter().enumerate() {
        println!("iter {i:>3}  J = {j:.6e}");
    }
    println!("{:>8} {:>8} {:>8} {:>8}", "t_start", "vx", "vy", "k");
    for (t, u) in result.control.breaks().iter().zip(result.control.values()) {
        println!("{t:>8.1} {:>8.3} {:>8.3} {:>8.3}", u[0], u[1], u[2]);
    }
    Ok(())
}
