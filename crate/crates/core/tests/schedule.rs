use proptest::prelude::*;
use ttssa::markov::{FiniteMarkovChain, MixingProfile, SampleTable};
use ttssa::problem::{spectral_summary, ProblemInstance, SpectralSummary};
use ttssa::schedule::*;
use ttssa::Error;

fn p1_setup() -> (FiniteMarkovChain, SampleTable, SpectralSummary) {
    let p = ProblemInstance::scalar(0.25, 0.1, -0.1, 0.25, 0.5, 0.25);
    let chain = FiniteMarkovChain::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
    let table = SampleTable::with_spread(&p, &chain, 0.2).unwrap();
    let spec = spectral_summary(&p, &table).unwrap();
    (chain, table, spec)
}

/// Direct scan of both transient inequalities.
fn scan_k_star(alpha: impl Fn(i64) -> f64, tau: i64) -> u64 {
    let ln2 = std::f64::consts::LN_2;
    (0..)
        .find(|&k: &i64| {
            let mut sum = 0.0;
            for t in (k - tau)..=k {
                sum += alpha(t.max(0));
            }
            sum <= ln2 && tau as f64 * alpha((k - tau).max(0)) <= ln2
        })
        .unwrap() as u64
}

#[test]
fn k_star_with_constant_mixing_time() {
    let s = StepSchedule::polynomial(0.1, 2.0 / 3.0, 0.05, 1.0).unwrap();
    let ks = k_star(&s, &ConstantTau(12)).unwrap();
    assert_eq!(ks.k_star, 14);
    assert_eq!(ks.k_star, scan_k_star(|t| 0.1 / ((t + 1) as f64).powf(2.0 / 3.0), 12));
    assert!(ks.at.holds());
    assert!(!ks.before.unwrap().holds());
}

#[test]
fn k_star_without_mixing_delay() {
    let s = StepSchedule::polynomial(0.5, 2.0 / 3.0, 0.25, 1.0).unwrap();
    let ks = k_star(&s, &ConstantTau(0)).unwrap();
    assert_eq!(ks.k_star, 0);
    assert!(ks.before.is_none());
}

#[test]
fn k_star_on_p1() {
    let (chain, table, _) = p1_setup();
    let mix = MixingProfile::compute(&chain, &table).unwrap();
    let s = StepSchedule::polynomial(8.2, 2.0 / 3.0, 3.5, 1.0).unwrap();
    let ks = k_star(&s, &mix).unwrap();
    assert!(ks.at.holds());
    assert!(!ks.before.unwrap().holds());
    for extra in [1, 10, 100, 10_000] {
        assert!(transient_witness(&s, &mix, ks.k_star + extra).holds());
    }
    assert_eq!(ks.k_star, 40);
}

#[test]
fn k_star_limit_reported() {
    let s = StepSchedule::polynomial(10.0, 0.9, 1.0, 1.0).unwrap();
    assert_eq!(k_star_with_limit(&s, &ConstantTau(1000), 50).unwrap_err(), Error::NotFound { limit: 50 });
}

#[test]
fn certification_of_p1_pairs() {
    let (_, _, spec) = p1_setup();
    let certified = StepSchedule::polynomial(8.2, 2.0 / 3.0, 3.5, 1.0).unwrap();
    assert_eq!(validate_schedule(&certified, &spec).status, CertificationStatus::Certified);

    let half = StepSchedule::polynomial(1.0, 0.5, 1.0, 0.5).unwrap();
    let c = validate_schedule(&half, &spec);
    assert_eq!(c.status, CertificationStatus::Invalid);
    assert!(c.reasons.iter().any(|r| r.contains("diverge")), "{:?}", c.reasons);

    let constant = StepSchedule { alpha: StepFamily::polynomial(8.2, 2.0 / 3.0).unwrap(), beta: StepFamily::constant(0.01).unwrap() };
    assert_eq!(validate_schedule(&constant, &spec).status, CertificationStatus::Invalid);

    let small = StepSchedule::polynomial(8.2, 2.0 / 3.0, 1.0, 1.0).unwrap();
    assert_eq!(validate_schedule(&small, &spec).status, CertificationStatus::Heuristic);
}

#[test]
fn basel_contribution() {
    let s = StepSchedule::polynomial(1.0, 0.75, 1.0, 1.0).unwrap();
    let c0 = c0_estimate_with_terms(&s, &ConstantTau(0), 100_000).unwrap();
    let basel = std::f64::consts::PI.powi(2) / 6.0;
    assert!(c0.beta_sq.partial < basel);
    assert!(c0.beta_sq.total() >= basel);
    assert!(c0.beta_sq.total() - basel <= c0.beta_sq.tail);
    assert!((c0.beta_sq.total() - basel).abs() < 1e-9);
}

#[test]
fn c0_stable_in_tail_start() {
    let (chain, table, _) = p1_setup();
    let mix = MixingProfile::compute(&chain, &table).unwrap();
    let s = StepSchedule::polynomial(8.2, 2.0 / 3.0, 3.5, 1.0).unwrap();
    let short = c0_estimate_with_terms(&s, &mix, 1_000_000).unwrap().total();
    let long = c0_estimate(&s, &mix).unwrap().total();
    assert!(long.is_finite() && long > 0.0);
    assert!((short / long - 1.0).abs() < 1e-4, "{short} vs {long}");
}

#[test]
fn c0_rejects_divergent_schedules() {
    let half = StepSchedule::polynomial(1.0, 0.5, 1.0, 0.5).unwrap();
    assert!(matches!(c0_estimate_with_terms(&half, &ConstantTau(1), 10), Err(Error::Diverges(_))));
}

proptest! {
    #[test]
    fn steps_nonincreasing(a0 in 0.01f64..10.0, a in 0.51f64..1.0, b0 in 0.01f64..10.0, b in 0.51f64..1.0, k in 0i64..1_000_000) {
        let s = StepSchedule::polynomial(a0, a, b0, b).unwrap();
        prop_assert!(s.alpha(k + 1) <= s.alpha(k));
        prop_assert!(s.beta(k + 1) <= s.beta(k));
        prop_assert_eq!(s.alpha(-k), s.alpha(0));
    }

    #[test]
    fn certified_steps_are_ordered(b0 in 3.45f64..4.0, a0 in 8.2f64..20.0, k in 0i64..1_000_000) {
        let (_, _, spec) = p1_setup();
        let s = StepSchedule::polynomial(a0, 2.0 / 3.0, b0, 1.0).unwrap();
        if validate_schedule(&s, &spec).is_certified() {
            prop_assert!(s.beta(k) <= s.alpha(k));
        }
    }

    #[test]
    fn k_star_matches_scan(a0 in 0.01f64..2.0, tau in 0u64..30) {
        let s = StepSchedule::polynomial(a0, 2.0 / 3.0, a0 / 2.0, 1.0).unwrap();
        let ks = k_star(&s, &ConstantTau(tau)).unwrap().k_star;
        prop_assert_eq!(ks, scan_k_star(|t| s.alpha(t), tau as i64));
    }
}
