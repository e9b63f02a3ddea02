use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarm_pde::grid::{gaussian_density, Grid, IndicatorField, Rect, Region, ScalarField};
use swarm_pde::macroscopic::{solve_mapping_model, PhysicalParams, SolverOptions};
use swarm_pde::mapping::{
    apply_k, apply_k_adjoint, objective, objective_and_gradient, power_estimate, solve_inverse, threshold, time_dot,
    InverseOptions, MappingProblem, SnapshotBasis,
};
use swarm_pde::schedule::make_lawnmower;

fn random_field(grid: Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
    ScalarField::from_fn(grid, |_, _| rng.random_range(lo..hi))
}

fn random_basis(seed: u64, nx: usize, windows: usize) -> SnapshotBasis {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Grid::new(Rect::new(0.0, 30.0, 0.0, 20.0), nx, nx + 2).unwrap();
    let mut edges = vec![0.0];
    for _ in 0..windows {
        let last = *edges.last().unwrap();
        edges.push(last + rng.random_range(0.5..3.0));
    }
    let fields = (0..windows).map(|_| random_field(g, &mut rng, 0.0, 0.01)).collect();
    SnapshotBasis::from_windows(&edges, fields).unwrap()
}

/// Synthetic problem from the macroscopic mapping model on a small grid.
fn sweep_problem(lambda: Option<f64>) -> (MappingProblem, IndicatorField) {
    let domain = Rect::new(0.0, 100.0, 0.0, 100.0);
    let g = Grid::new(domain, 20, 20).unwrap();
    let truth = IndicatorField::from_region(g, &Region::parse("disk:45,55,25").unwrap());
    let sched = make_lawnmower(&domain, 10, 5.0, 300.0).unwrap();
    let params = PhysicalParams::new(1e-4, 100.0, 0.0).unwrap();
    let y0 = gaussian_density(g, sched.start(), 1.0).unwrap();
    let edges: Vec<f64> = (0..=300).map(|k| k as f64).collect();
    let sol =
        solve_mapping_model(&truth, &sched.to_control().unwrap(), &params, &y0, &edges, &SolverOptions::default())
            .unwrap();
    let basis = SnapshotBasis::from_solution(&sol).unwrap();
    (MappingProblem::from_observations(basis, &sol.observations, 100.0, lambda).unwrap(), truth)
}

#[test]
fn operator_matches_dense_matrix() {
    let basis = random_basis(1, 7, 13);
    let g = *basis.grid();
    let k_o = 100.0;
    let area = g.cell_area();
    let weights = basis.weights();
    // K[j][c] = k_o * area * y1_j[c]
    let k: Vec<Vec<f64>> = basis.fields().iter().map(|f| f.values().iter().map(|v| k_o * area * v).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = random_field(g, &mut rng, 0.0, 1.0);
    let kh = apply_k(&h, &basis, k_o).unwrap();
    for (row, got) in k.iter().zip(&kh) {
        let want: f64 = row.iter().zip(h.values()).map(|(a, b)| a * b).sum();
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
    // K* G = W_space^{-1} K^T W_time G
    let gv: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ks = apply_k_adjoint(&gv, &basis, k_o).unwrap();
    for (c, &got) in ks.values().iter().enumerate() {
        let want: f64 = (0..basis.len()).map(|j| k[j][c] * weights[j] * gv[j]).sum::<f64>() / area;
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn full_indicator_maps_to_observation_rate() {
    let (problem, _) = sweep_problem(Some(1e-3));
    let ones = ScalarField::constant(*problem.basis.grid(), 1.0);
    for v in apply_k(&ones, &problem.basis, 100.0).unwrap() {
        assert!((v - 100.0).abs() < 1e-9, "{v}");
    }
    let zeros = ScalarField::zeros(*problem.basis.grid());
    assert!(apply_k(&zeros, &problem.basis, 100.0).unwrap().iter().all(|&v| v == 0.0));
    let back = apply_k_adjoint(&vec![0.0; problem.basis.len()], &problem.basis, 100.0).unwrap();
    assert!(back.values().iter().all(|&v| v == 0.0));
}

#[test]
fn gradient_matches_central_differences() {
    let (problem, _) = sweep_problem(None);
    let g = *problem.basis.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let h = random_field(g, &mut rng, 0.0, 1.0);
        let s = random_field(g, &mut rng, -1.0, 1.0);
        let (_, grad) = objective_and_gradient(&h, &problem).unwrap();
        let eps = 1e-5;
        let mut hp = h.clone();
        hp.axpy(eps, &s);
        let mut hm = h.clone();
        hm.axpy(-eps, &s);
        let fd = (objective(&hp, &problem).unwrap() - objective(&hm, &problem).unwrap()) / (2.0 * eps);
        let exact = grad.dot(&s);
        assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "{fd} vs {exact}");
    }
}

#[test]
fn residual_free_point_has_gradient_lambda_h() {
    let basis = random_basis(9, 6, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let h = random_field(*basis.grid(), &mut rng, 0.0, 1.0);
    let data = apply_k(&h, &basis, 50.0).unwrap();
    let problem = MappingProblem::new(basis, data, 50.0, 0.3).unwrap();
    let (_, grad) = objective_and_gradient(&h, &problem).unwrap();
    for (gv, hv) in grad.values().iter().zip(h.values()) {
        assert!((gv - 0.3 * hv).abs() < 1e-12);
    }
}

#[test]
fn reconstruction_recovers_disk_and_history_decreases() {
    let (problem, truth) = sweep_problem(None);
    let g = *problem.basis.grid();
    let result = solve_inverse(&problem, &IndicatorField::zeros(g), &InverseOptions::default()).unwrap();
    assert!(result.history.windows(2).all(|w| w[1] <= w[0]));
    assert!(result.estimate.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(result.thresholded.is_binary());
    let mis = result.thresholded.mismatch_area(&truth) / g.extent().area();
    assert!(mis <= 0.10, "misclassified fraction {mis}");
}

#[test]
fn both_initial_guesses_reach_the_same_minimum() {
    let (problem, _) = sweep_problem(None);
    let g = *problem.basis.grid();
    let opts = InverseOptions::default();
    let a = solve_inverse(&problem, &IndicatorField::zeros(g), &opts).unwrap();
    let b = solve_inverse(&problem, &IndicatorField::ones(g), &opts).unwrap();
    let (ja, jb) = (*a.history.last().unwrap(), *b.history.last().unwrap());
    assert!((ja - jb).abs() <= 1e-6 * ja.abs().max(1.0), "{ja} vs {jb}");
}

#[test]
fn huge_regularisation_drives_estimate_to_zero() {
    let (problem, _) = sweep_problem(Some(1.0));
    let k_norm = power_estimate(&problem.basis, problem.k_o, 0.0, 20).unwrap();
    let problem = MappingProblem::new(problem.basis, problem.data, problem.k_o, 1e3 * k_norm).unwrap();
    let g = *problem.basis.grid();
    let result = solve_inverse(&problem, &IndicatorField::ones(g), &InverseOptions::default()).unwrap();
    assert!(result.estimate.values().iter().all(|&v| v <= 1e-3));
}

#[test]
fn threshold_examples() {
    let g = Grid::new(Rect::new(0.0, 3.0, 0.0, 1.0), 3, 1).unwrap();
    let h = IndicatorField::new(ScalarField::new(g, vec![0.5, 0.49, 1.0]).unwrap()).unwrap();
    assert_eq!(threshold(&h).values(), &[1.0, 0.0, 1.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn adjoint_identity_holds(seed in any::<u64>()) {
        let basis = random_basis(seed % 7, 5, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_field(*basis.grid(), &mut rng, 0.0, 1.0);
        let gv: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kh = apply_k(&h, &basis, 100.0).unwrap();
        let lhs = time_dot(&basis, &kh, &gv);
        let rhs = h.dot(&apply_k_adjoint(&gv, &basis, 100.0).unwrap());
        let scale = time_dot(&basis, &kh, &kh).sqrt() * time_dot(&basis, &gv, &gv).sqrt();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
    }

    #[test]
    fn objective_is_convex(seed in any::<u64>(), theta in 0.01f64..0.99) {
        let basis = random_basis(seed % 5, 5, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = *basis.grid();
        let data: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(0.0..2.0)).collect();
        let problem = MappingProblem::new(basis, data, 100.0, 1e-2).unwrap();
        let a = random_field(g, &mut rng, 0.0, 1.0);
        let b = random_field(g, &mut rng, 0.0, 1.0);
        let mut mix = a.clone();
        mix.scale(theta);
        mix.axpy(1.0 - theta, &b);
        let j_mix = objective(&mix, &problem).unwrap();
        let bound = theta * objective(&a, &problem).unwrap() + (1.0 - theta) * objective(&b, &problem).unwrap();
        prop_assert!(j_mix <= bound + 1e-12 * bound.abs().max(1.0));
    }

    #[test]
    fn projection_is_idempotent_and_feasible(values in prop::collection::vec(-3.0f64..3.0, 12)) {
        let g = Grid::new(Rect::new(0.0, 4.0, 0.0, 3.0), 4, 3).unwrap();
        let once = IndicatorField::project(ScalarField::new(g, values).unwrap());
        prop_assert!(once.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let twice = IndicatorField::project(once.field().clone());
        prop_assert_eq!(once, twice);
    }
}
