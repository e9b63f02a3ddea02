//! Compares the adjoint gradient of the coverage objective with central
//! finite differences along random directions.

use swarm_pde::control::ControlBounds;
use swarm_pde::coverage::{finite_difference_check, CoverageProblem};
use swarm_pde::grid::{gaussian_density, Grid, IndicatorField, Rect, Region};
use swarm_pde::macroscopic::PhysicalParams;
use swarm_pde::pipeline::{random_control, random_directions};

fn main() -> swarm_pde::Result<()> {
    let grid = Grid::new(Rect::new(0.0, 100.0, 0.0, 100.0), 25, 25)?;
    let region = IndicatorField::from_region(grid, &Region::parse("disk:50,50,25")?);
    let target = region.field().map(|h| 2e-4 * h);
    let bounds = ControlBounds::new([-1.5, -1.5, 0.02], [1.5, 1.5, 0.08])?;
    let problem = CoverageProblem::activity_target(
        region,
        PhysicalParams::new(5.0, 0.0, 0.1)?,
        gaussian_density(grid, (40.0, 45.0), 20.0)?,
        30.0,
        target,
        1e-4,
        bounds,
        10,
    )?;
    let u = random_control(problem.horizon, problem.intervals, bounds, 3)?;
    let dirs = random_directions(problem.intervals, 10, 4);
    let (report, samples) = finite_difference_check(&u, &problem, &dirs, 1e-4)?;

    println!("J(u) = {:.10e}", report.objective);
    println!("{:>16} {:>16} {:>10}", "finite diff", "adjoint", "rel err");
    for s in &samples {
        println!("{:>16.8e} {:>16.8e} {:>10.2e}", s.finite_difference, s.adjoint, s.rel_error);
    }
    println!("velocity assembly forms differ by {:.2e}", report.form_discrepancy);
    Ok(())
}
