//! Reconstructs a region of interest from expected observation rates and
//! prints the estimate and its thresholded version as ASCII maps.

use swarm_pde::grid::{gaussian_density, Grid, IndicatorField, Rect, Region};
use swarm_pde::macroscopic::{solve_mapping_model, PhysicalParams, SolverOptions};
use swarm_pde::mapping::{solve_inverse, InverseOptions, MappingProblem, SnapshotBasis};
use swarm_pde::schedule::make_lawnmower;

fn ascii(h: &IndicatorField) -> String {
    let g = h.grid();
    let shades = [' ', '.', ':', '+', '#'];
    let mut out = String::new();
    for j in (0..g.ny()).rev() {
        for i in 0..g.nx() {
            let v = h.values()[g.index(i, j)];
            out.push(shades[((v * 4.0).round() as usize).min(4)]);
        }
        out.push('\n');
    }
    out
}

fn main() -> swarm_pde::Result<()> {
    let domain = Rect::new(0.0, 100.0, 0.0, 100.0);
    let grid = Grid::new(domain, 30, 30)?;
    let truth = IndicatorField::from_region(grid, &Region::parse("disk:35,60,18;rect:60,85,15,40")?);
    let horizon = 600.0;
    let schedule = make_lawnmower(&domain, 15, 5.0, horizon)?;
    let params = PhysicalParams::new(1e-4, 100.0, 0.0)?;
    let y0 = gaussian_density(grid, schedule.start(), 0.5)?;
    let windows: Vec<f64> = (0..=600).map(|k| k as f64).collect();
    let sol = solve_mapping_model(&truth, &schedule.to_control()?, &params, &y0, &windows, &SolverOptions::default())?;

    let basis = SnapshotBasis::from_solution(&sol)?;
    let problem = MappingProblem::from_observations(basis, &sol.observations, params.obs_rate, None)?;
    let result = solve_inverse(&problem, &IndicatorField::zeros(grid), &InverseOptions::default())?;
    println!(
        "lambda {:.3e}, {} iterations, J = {:.6e}",
        problem.lambda,
        result.iterations,
        result.history.last().copied().unwrap_or(f64::NAN)
    );
    println!("misclassified area: {:.1} m^2 of {:.0}", result.thresholded.mismatch_area(&truth), domain.area());
    println!("estimate:\n{}", ascii(&result.estimate));
    println!("thresholded:\n{}", ascii(&result.thresholded));
    Ok(())
}
