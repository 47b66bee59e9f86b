mod common;

use common::{p1, p1_table, two_state, valid_instance};
use proptest::prelude::*;
use ttssa::engine::*;
use ttssa::linalg::Vector;
use ttssa::markov::{FiniteMarkovChain, SampleTable, StartState};
use ttssa::problem::exact_solution;
use ttssa::schedule::StepSchedule;
use ttssa::Error;

fn certified() -> StepSchedule {
    StepSchedule::polynomial(8.2, 2.0 / 3.0, 3.5, 1.0).unwrap()
}

fn origin() -> (Vector, Vector) {
    (Vector::zeros(1), Vector::zeros(1))
}

#[test]
fn noiseless_run_converges() {
    let p = p1();
    let chain = FiniteMarkovChain::single_state();
    let table = SampleTable::noiseless(&p);
    let sim = Simulator::new(&p, &chain, &table, certified()).unwrap();
    let (x0, y0) = origin();
    let rec = sim.run_trajectory(&x0, &y0, 1, &[0, 100_000]).unwrap();
    let z0 = rec.x_hat_sq[0] + rec.y_hat_sq[0];
    let z = rec.x_hat_sq[1] + rec.y_hat_sq[1];
    assert!(z <= 1e-4 * z0, "{z} vs {z0}");
}

#[test]
fn start_at_solution_stays_without_noise() {
    let p = p1();
    let chain = FiniteMarkovChain::single_state();
    let table = SampleTable::noiseless(&p);
    let sim = Simulator::new(&p, &chain, &table, certified()).unwrap();
    let sol = exact_solution(&p).unwrap();
    let rec = sim.run_trajectory(&sol.x_star, &sol.y_star, 1, &[0, 10, 1000]).unwrap();
    assert!(rec.lyapunov.iter().all(|&v| v < 1e-25));
}

#[test]
fn identical_seeds_identical_csv() {
    let p = p1();
    let chain = two_state();
    let table = p1_table(0.2);
    let sim = Simulator::new(&p, &chain, &table, certified()).unwrap();
    let (x0, y0) = origin();
    let grid = with_successors(&geometric_checkpoints(2000, CHECKPOINTS_PER_DECADE), 2000);
    let a = sim.monte_carlo_mse(&x0, &y0, 16, 42, &grid).unwrap().to_csv_string();
    let b = sim.monte_carlo_mse(&x0, &y0, 16, 42, &grid).unwrap().to_csv_string();
    assert_eq!(a, b);
    let c = sim.monte_carlo_mse(&x0, &y0, 16, 43, &grid).unwrap().to_csv_string();
    assert_ne!(a, c);
}

#[test]
fn worker_count_does_not_change_results() {
    let p = p1();
    let chain = two_state();
    let table = p1_table(0.2);
    let sim = Simulator::new(&p, &chain, &table, certified()).unwrap();
    let (x0, y0) = origin();
    let grid = geometric_checkpoints(500, 10);
    let run = |threads: &str| {
        std::env::set_var(THREADS_ENV, threads);
        let csv = sim.monte_carlo_mse(&x0, &y0, 24, 7, &grid).unwrap().to_csv_string();
        std::env::remove_var(THREADS_ENV);
        csv
    };
    assert_eq!(run("1"), run("5"));
}

#[test]
fn curve_csv_layout() {
    let p = p1();
    let chain = two_state();
    let table = p1_table(0.2);
    let (x0, y0) = origin();
    let curve = monte_carlo_mse(&p, &table, &chain, &certified(), &x0, &y0, 4, 1, &[0, 1, 10]).unwrap();
    let csv = curve.to_csv_string();
    assert!(csv.starts_with("k,alpha_k,beta_k,mse_x,mse_y,lyapunov,se_lyapunov\n"));
    assert_eq!(csv.lines().count(), 4);
    let back = read_curve_column(csv.as_bytes(), "lyapunov").unwrap();
    assert_eq!(back, curve.lyapunov_points());
}

#[test]
fn divergence_is_reported_with_trajectory() {
    let p = p1();
    let chain = two_state();
    let table = p1_table(0.2);
    let wild = StepSchedule::polynomial(1e6, 0.6, 1e6, 1.0).unwrap();
    let (x0, y0) = origin();
    let err = monte_carlo_mse(&p, &table, &chain, &wild, &x0, &y0, 3, 1, &[0, 1000]).unwrap_err();
    assert!(matches!(err, Error::NonFinite { trajectory: Some(0), .. }), "{err:?}");
}

#[test]
fn free_run_matches_simulator() {
    let p = p1();
    let chain = two_state();
    let table = p1_table(0.2);
    let (x0, y0) = origin();
    let a = run_trajectory(&p, &table, &chain, &certified(), &x0, &y0, 9, &[0, 5, 50]).unwrap();
    let b = Simulator::new(&p, &chain, &table, certified()).unwrap().run_trajectory(&x0, &y0, 9, &[0, 5, 50]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fixed_start_state_is_used() {
    let p = p1();
    let chain = two_state();
    let table = p1_table(0.2);
    let sim = Simulator::new(&p, &chain, &table, certified()).unwrap().with_start(StartState::Fixed(1));
    let mut stream = sim.stream(5).unwrap();
    assert_eq!(stream.state(), 1);
    stream.next_sample();
    assert_eq!(stream.steps(), 1);
}

#[test]
fn checkpoints_cover_horizon() {
    let grid = geometric_checkpoints(100_000, 25);
    assert_eq!(grid[0], 0);
    assert_eq!(*grid.last().unwrap(), 100_000);
    assert!(grid.windows(2).all(|w| w[0] < w[1]));
    let both = with_successors(&grid, 100_000);
    assert!(grid.iter().filter(|&&k| k < 100_000).all(|k| both.contains(&(k + 1))));
}

proptest! {
    #[test]
    fn residual_map_is_a_bijection(p in valid_instance(), seed in any::<u64>()) {
        let sol = exact_solution(&p).unwrap();
        let map = ResidualMap::new(&p, &sol).unwrap();
        let mut rng = seed;
        let mut next = || { rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5 };
        let x = Vector::from_fn(p.dx(), |_, _| next());
        let y = Vector::from_fn(p.dy(), |_, _| next());
        let r = map.residuals(&x, &y);
        let (x2, y2) = map.reconstruct(&r.x_hat, &r.y_hat);
        prop_assert!((x2 - &x).amax() < 1e-9 && (y2 - &y).amax() < 1e-12);
        let at_star = map.residuals(&sol.x_star, &sol.y_star);
        prop_assert!(at_star.z_hat_sq < 1e-18);
    }

    #[test]
    fn trajectories_are_deterministic(seed in any::<u64>()) {
        let p = p1();
        let chain = two_state();
        let table = p1_table(0.2);
        let (x0, y0) = origin();
        let a = run_trajectory(&p, &table, &chain, &certified(), &x0, &y0, seed, &[0, 10, 100]).unwrap();
        let b = run_trajectory(&p, &table, &chain, &certified(), &x0, &y0, seed, &[0, 10, 100]).unwrap();
        prop_assert_eq!(a, b);
    }
}
