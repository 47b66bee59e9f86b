mod common;

use common::{p1, p1_table, two_state, valid_instance};
use proptest::prelude::*;
use ttssa::linalg::Matrix;
use ttssa::markov::{FiniteMarkovChain, SampleTable};
use ttssa::problem::*;
use ttssa::Error;

#[test]
fn p1_solution_and_reduced_matrix() {
    let p = p1();
    assert!((reduced_matrix(&p).unwrap()[(0, 0)] - 0.29).abs() < 1e-15);
    let sol = exact_solution(&p).unwrap();
    assert!((sol.y_star[0] - 0.45 / 0.29).abs() < 1e-14);
    assert!((sol.x_star[0] - 1.379_310_344_827_586).abs() < 1e-12);
    assert!((sol.y_star[0] - 1.551_724_137_931_034).abs() < 1e-12);
}

#[test]
fn decoupled_reduced_matrix() {
    let mut p = p1();
    p.a21[(0, 0)] = 0.0;
    assert_eq!(reduced_matrix(&p).unwrap(), p.a22);
}

#[test]
fn singular_blocks() {
    let zero_a11 = ProblemInstance::scalar(0.0, 0.1, -0.1, 0.25, 0.5, 0.25);
    assert!(matches!(exact_solution(&zero_a11), Err(Error::SingularMatrix { what: "A11", .. })));
    // Δ = 0.04 − 0.2·1·0.2 = 0
    let zero_delta = ProblemInstance::scalar(1.0, 0.2, 0.2, 0.04, 0.5, 0.25);
    assert!(matches!(exact_solution(&zero_delta), Err(Error::SingularMatrix { what: "Delta", .. })));
}

#[test]
fn spectral_summary_examples() {
    let s = spectral_summary(&p1(), &p1_table(0.2)).unwrap();
    assert_eq!(s.gamma, 0.25);
    assert!((s.rho - 0.29).abs() < 1e-15);
    assert_eq!(s.lambda1, 0.25);
    assert!((s.sigman - 0.29).abs() < 1e-15);

    let mut p = ProblemInstance::zeros(2, 1);
    p.a11 = Matrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.2]);
    p.a22[(0, 0)] = 0.1;
    let s = spectral_summary(&p, &SampleTable::noiseless(&p)).unwrap();
    assert!((s.gamma - 0.1).abs() < 1e-15 && (s.lambda1 - 0.1).abs() < 1e-15 && (s.lambdan - 0.2).abs() < 1e-15);

    p.a11 = Matrix::from_row_slice(2, 2, &[0.2, 0.1, -0.1, 0.2]);
    let s = spectral_summary(&p, &SampleTable::noiseless(&p)).unwrap();
    assert!((s.gamma - 0.2).abs() < 1e-15);
}

#[test]
fn negative_a11_fails_positivity() {
    let p = ProblemInstance::scalar(-0.1, 0.1, -0.1, 0.25, 0.5, 0.25);
    let chain = FiniteMarkovChain::single_state();
    let report = validate_assumptions(&p, &chain, &SampleTable::noiseless(&p), None);
    assert!(!report.positivity_ok);
    assert!(!report.all_ok());
    assert!(matches!(spectral_summary(&p, &SampleTable::noiseless(&p)), Err(Error::NotPositive { what: "A11", .. })));
}

fn symmetric_noise(a11: f64, a12: f64) -> SampleTable {
    let p = p1();
    let mut hi = p.clone();
    let mut lo = p.clone();
    hi.a11[(0, 0)] += a11;
    lo.a11[(0, 0)] -= a11;
    hi.a12[(0, 0)] += a12;
    lo.a12[(0, 0)] -= a12;
    SampleTable::new(vec![hi, lo]).unwrap()
}

#[test]
fn symmetric_noise_reports() {
    let chain = FiniteMarkovChain::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    // ±0.05 on A11 pushes one state to 0.30
    let report = validate_assumptions(&p1(), &chain, &symmetric_noise(0.05, 0.0), None);
    assert!(!report.bounded_ok);
    assert!((report.worst_matrix_norm - 0.3).abs() < 1e-15);
    assert!(report.positivity_ok && report.stationary_mean_ok);
    let report = validate_assumptions(&p1(), &chain, &symmetric_noise(0.0, 0.05), None);
    assert!(report.all_ok(), "{report:?}");
}

#[test]
fn oversized_block_detected() {
    let chain = two_state();
    let mut big = p1();
    big.a11[(0, 0)] = 0.3;
    let table = SampleTable::new(vec![p1(), big]).unwrap();
    assert!(!validate_assumptions(&p1(), &chain, &table, None).bounded_ok);
}

#[test]
fn p1_spread_table_passes() {
    let report = validate_assumptions(&p1(), &two_state(), &p1_table(0.2), None);
    assert!(report.all_ok(), "{report:?}");
}

#[test]
fn json_round_trip() {
    let p = p1();
    let text = serde_json::to_string(&p.to_json_value()).unwrap();
    assert_eq!(ProblemInstance::from_json(&text).unwrap(), p);
    assert!(ProblemInstance::from_json(r#"{"a11":[[1]],"a12":[[1,2]],"a21":[[1]],"a22":[[1]],"b1":[1],"b2":[1]}"#).is_err());
}

proptest! {
    #[test]
    fn exact_solution_solves_system(p in valid_instance()) {
        let sol = exact_solution(&p).unwrap();
        let rel = p.residual_norm(&sol.x_star, &sol.y_star) / p.rhs_norm().max(f64::MIN_POSITIVE);
        prop_assert!(rel <= 1e-10, "relative residual {rel}");
    }

    #[test]
    fn skew_part_leaves_gamma(p in valid_instance(), t in -0.5f64..0.5) {
        let n = p.dx();
        let mut skew = Matrix::zeros(n, n);
        if n > 1 {
            skew[(0, 1)] = t;
            skew[(1, 0)] = -t;
        }
        let mut q = p.clone();
        q.a11 += skew;
        let g1 = spectral_summary(&p, &SampleTable::noiseless(&p)).unwrap().gamma;
        let a11_only = |m: &ProblemInstance| ttssa::linalg::min_sym_eigenvalue(&m.a11);
        prop_assert!((a11_only(&q) - g1).abs() < 1e-12);
    }
}
