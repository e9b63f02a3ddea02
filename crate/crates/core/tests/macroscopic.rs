use proptest::prelude::*;

use swarm_pde::control::{ControlBounds, ControlSignal};
use swarm_pde::grid::{gaussian_density, Grid, IndicatorField, Rect, Region, ScalarField};
use swarm_pde::macroscopic::{
    solve_adjoint, solve_coverage_model, solve_mapping_model, PhysicalParams, SolverOptions, StateDensities,
};
use swarm_pde::schedule::make_lawnmower;

fn square(n: usize) -> Grid {
    Grid::new(Rect::new(0.0, 100.0, 0.0, 100.0), n, n).unwrap()
}

fn uniform_density(grid: Grid) -> ScalarField {
    ScalarField::constant(grid, 1.0 / grid.extent().area())
}

#[test]
fn spatial_totals_follow_the_two_state_ode() {
    let g = square(10);
    let h = IndicatorField::ones(g);
    let params = PhysicalParams::new(0.0, 0.0, 0.1).unwrap();
    let u = ControlSignal::uniform(10.0, 1, [0.0, 0.0, 0.1], ControlBounds::symmetric(0.0, 0.1).unwrap()).unwrap();
    let sol = solve_coverage_model(&h, &u, &params, &uniform_density(g), &[10.0], &SolverOptions::default()).unwrap();
    let s = sol.final_state();
    let y1 = (1.0 + (-2.0f64).exp()) / 2.0;
    let y3 = 0.05 * (10.0 + (1.0 - (-2.0f64).exp()) / 0.2);
    assert!((s.y1.integrate() - y1).abs() < 1e-3, "{} vs {y1}", s.y1.integrate());
    assert!((s.y2.integrate() - (1.0 - y1)).abs() < 1e-3);
    assert!((s.y3.integrate() - y3).abs() < 1e-3, "{} vs {y3}", s.y3.integrate());
}

fn cosine_error(n: usize) -> f64 {
    let g = Grid::new(Rect::new(0.0, 1.0, 0.0, 1.0), n, n).unwrap();
    let pi = std::f64::consts::PI;
    let mode = |x: f64, y: f64| (pi * x).cos() * (pi * y).cos();
    let y0 = ScalarField::from_fn(g, |x, y| 1.0 + 0.5 * mode(x, y));
    let d = 1.0;
    let t = 0.02;
    let params = PhysicalParams::new(d, 0.0, 0.0).unwrap();
    let u = ControlSignal::uniform(t, 1, [0.0; 3], ControlBounds::symmetric(0.0, 0.0).unwrap()).unwrap();
    let sol =
        solve_mapping_model(&IndicatorField::zeros(g), &u, &params, &y0, &[0.0, t], &SolverOptions::default()).unwrap();
    let decay = (-2.0 * pi * pi * d * t).exp();
    let exact = ScalarField::from_fn(g, |x, y| 1.0 + 0.5 * decay * mode(x, y));
    let mut diff = sol.final_state.y1.clone();
    diff.axpy(-1.0, &exact);
    diff.norm_sq().sqrt()
}

#[test]
fn neumann_cosine_mode_converges_at_second_order() {
    let errs: Vec<f64> = [8, 16, 32].iter().map(|&n| cosine_error(n)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..4.5).contains(&ratio), "errors {errs:?}");
    }
}

#[test]
fn full_indicator_gives_linear_observation_growth() {
    let g = square(25);
    let sched = make_lawnmower(&g.extent(), 5, 3.0, 200.0).unwrap();
    let params = PhysicalParams::new(0.1, 100.0, 0.0).unwrap();
    let y0 = gaussian_density(g, sched.start(), 3.0).unwrap();
    let times: Vec<f64> = (0..=200).map(|k| k as f64).collect();
    let u = sched.to_control().unwrap();
    let sol =
        solve_mapping_model(&IndicatorField::ones(g), &u, &params, &y0, &times, &SolverOptions::default()).unwrap();
    for (&t, &gv) in times.iter().zip(sol.observations.values()).skip(1) {
        assert!((gv - 100.0 * t).abs() <= 0.005 * 100.0 * t, "g({t}) = {gv}");
    }
    let none =
        solve_mapping_model(&IndicatorField::zeros(g), &u, &params, &y0, &times, &SolverOptions::default()).unwrap();
    assert!(none.observations.values().iter().all(|&v| v == 0.0));
}

fn disk_observations(n: usize) -> f64 {
    let g = square(n);
    let region = IndicatorField::from_region(g, &Region::parse("disk:60,45,20").unwrap());
    let sched = make_lawnmower(&g.extent(), 4, 2.0, 300.0).unwrap();
    let params = PhysicalParams::new(0.5, 100.0, 0.0).unwrap();
    let y0 = gaussian_density(g, sched.start(), 5.0).unwrap();
    let sol =
        solve_mapping_model(&region, &sched.to_control().unwrap(), &params, &y0, &[300.0], &SolverOptions::default())
            .unwrap();
    sol.observations.last_value()
}

#[test]
fn observation_total_is_stable_under_refinement() {
    let coarse = disk_observations(50);
    let fine = disk_observations(100);
    assert!((coarse - fine).abs() <= 0.02 * fine, "{coarse} vs {fine}");
}

#[test]
fn zero_rate_produces_no_stopped_agents() {
    let g = square(20);
    let region = IndicatorField::from_region(g, &Region::parse("disk:50,50,30").unwrap());
    let params = PhysicalParams::new(0.5, 0.0, 0.1).unwrap();
    let u = ControlSignal::uniform(50.0, 5, [0.5, -0.3, 0.0], ControlBounds::symmetric(1.0, 1.0).unwrap()).unwrap();
    let y0 = gaussian_density(g, (40.0, 60.0), 8.0).unwrap();
    let sol = solve_coverage_model(&region, &u, &params, &y0, &[10.0, 30.0, 50.0], &SolverOptions::default()).unwrap();
    for s in &sol.trajectory.states {
        assert!(s.y2.values().iter().all(|&v| v == 0.0));
        assert!(s.y3.values().iter().all(|&v| v == 0.0));
    }
}

fn forward_with_adjoint(
    weights: [f64; 3],
    params: PhysicalParams,
    value: [f64; 3],
    target_from_state: bool,
) -> (Vec<StateDensities>, Vec<f64>) {
    let g = square(16);
    let region = IndicatorField::from_region(g, &Region::parse("disk:50,50,25").unwrap());
    let bounds = ControlBounds::symmetric(1.0, 0.5).unwrap();
    let u = ControlSignal::uniform(40.0, 4, value, bounds).unwrap();
    let y0 = gaussian_density(g, (45.0, 40.0), 10.0).unwrap();
    let fwd = solve_coverage_model(&region, &u, &params, &y0, &[10.0, 20.0], &SolverOptions::default()).unwrap();
    let target = if target_from_state { fwd.final_state().clone() } else { StateDensities::zeros(g) };
    let adj = solve_adjoint(&fwd, &u, &region, &params, weights, &target).unwrap();
    (adj.states, adj.times)
}

#[test]
fn matched_terminal_state_gives_zero_adjoint() {
    let params = PhysicalParams::new(0.5, 0.0, 0.1).unwrap();
    let (states, _) = forward_with_adjoint([0.0, 0.0, 1.0], params, [0.3, 0.2, 0.2], true);
    for s in states {
        for c in 0..3 {
            assert!(s.component(c).values().iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn activity_adjoint_is_constant_in_time() {
    let params = PhysicalParams::new(0.5, 0.0, 0.1).unwrap();
    let (states, times) = forward_with_adjoint([0.0, 0.0, 1.0], params, [0.3, 0.2, 0.2], false);
    assert!(times.len() >= 3);
    let last = states.last().unwrap().y3.clone();
    for s in &states {
        assert_eq!(s.y3, last);
    }
}

#[test]
fn pure_diffusion_adjoint_conserves_its_integral() {
    let params = PhysicalParams::new(0.5, 0.0, 0.0).unwrap();
    let (states, _) = forward_with_adjoint([1.0, 0.0, 0.0], params, [0.0, 0.0, 0.0], false);
    let m0 = states[0].y1.integrate();
    assert!(m0.abs() > 0.0);
    for s in &states {
        assert!((s.y1.integrate() - m0).abs() <= 1e-8 * m0.abs(), "{} vs {m0}", s.y1.integrate());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn coverage_conserves_mass_and_stays_nonnegative(
        values in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, 0.0f64..5.0), 6),
        cx in 20.0f64..80.0,
        cy in 20.0f64..80.0,
    ) {
        let g = square(20);
        let region = IndicatorField::from_region(g, &Region::parse("disk:50,50,30").unwrap());
        let params = PhysicalParams::new(5e-4, 0.0, 0.1).unwrap();
        let bounds = ControlBounds::symmetric(2.0, 5.0).unwrap();
        let vals: Vec<[f64; 3]> = values.iter().map(|&(a, b, c)| [a, b, c]).collect();
        let u = ControlSignal::uniform(60.0, 6, [0.0; 3], bounds).unwrap().with_values(vals).unwrap();
        let y0 = gaussian_density(g, (cx, cy), 6.0).unwrap();
        let times: Vec<f64> = (1..=12).map(|k| 5.0 * k as f64).collect();
        let sol = solve_coverage_model(&region, &u, &params, &y0, &times, &SolverOptions::default()).unwrap();
        let mut prev_activity = 0.0;
        for s in &sol.trajectory.states {
            prop_assert!((s.y1.integrate() + s.y2.integrate() - 1.0).abs() <= 1e-8);
            prop_assert!(s.min() >= -1e-12);
            let a = s.y3.integrate();
            prop_assert!(a >= prev_activity - 1e-15);
            prev_activity = a;
        }
    }
}
