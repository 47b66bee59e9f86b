use astro_float::{BigFloat, Consts, RoundingMode};
use proptest::prelude::*;
use ttssa::constants::*;
use ttssa::extended::ExtReal;
use ttssa::markov::{FiniteMarkovChain, MixingProfile, SampleTable};
use ttssa::problem::{spectral_summary, ProblemInstance, SpectralSummary};
use ttssa::schedule::{ConstantTau, StepSchedule};

const P: usize = 320;
const RM: RoundingMode = RoundingMode::ToEven;

fn big(x: f64) -> BigFloat {
    BigFloat::from_f64(x, P)
}

fn to_f64(x: &BigFloat) -> f64 {
    x.to_string().parse().unwrap()
}

fn p1_spec() -> SpectralSummary {
    let p = ProblemInstance::scalar(0.25, 0.1, -0.1, 0.25, 0.5, 0.25);
    let chain = FiniteMarkovChain::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
    let table = SampleTable::with_spread(&p, &chain, 0.2).unwrap();
    spectral_summary(&p, &table).unwrap()
}

/// ln C1 = ln(E|Z0|^2 + C0 G2) + 2 C0 G1, and ln C2, evaluated with astro-float.
fn oracle_logs(s: &SpectralSummary, a0: f64, c0: f64, ez: f64) -> (f64, f64, BigFloat, BigFloat) {
    let mut cc = Consts::new().unwrap();
    let l = big(s.lambda1);
    let eight_l1 = l.mul(&big(8.0), P, RM).add(&big(1.0), P, RM);
    let g1 = big(30.0)
        .mul(&big(s.gamma + 1.0), P, RM)
        .mul(&eight_l1.powi(5, P, RM), P, RM)
        .mul(&big(1.0 + a0).powi(2, P, RM), P, RM)
        .div(&big(s.gamma).mul(&l.powi(6, P, RM), P, RM), P, RM);
    let yb = big(2.0 * s.b_bound + s.y_star_norm).powi(2, P, RM);
    let g2 = big(38.0).mul(&eight_l1.powi(5, P, RM), P, RM).mul(&yb, P, RM).div(&l.powi(8, P, RM), P, RM);
    let c0b = big(c0);
    let exponent = big(2.0).mul(&c0b, P, RM).mul(&g1, P, RM);
    let ln_c1 = big(ez).add(&c0b.mul(&g2, P, RM), P, RM).ln(P, RM, &mut cc).add(&exponent, P, RM);
    // C2 = c1 * q + r with q, r finite: ln C2 = ln C1 + ln(q + r/C1) ≈ ln C1 + ln q for huge C1
    let gr = s.gamma * s.rho;
    let scale = eight_l1.powi(5, P, RM).div(&l.powi(8, P, RM), P, RM);
    let q = big(9.0 * (3.0 + 7.0 * gr)).div(&big(4.0 * gr), P, RM).mul(&scale, P, RM);
    let ln_c2 = ln_c1.add(&q.ln(P, RM, &mut cc), P, RM);
    (to_f64(&g1), to_f64(&g2), ln_c1, ln_c2)
}

/// Scientific notation with `digits` significant digits of `e^ln_x`.
fn oracle_scientific(ln_x: &BigFloat, digits: usize) -> String {
    let mut cc = Consts::new().unwrap();
    let ln10 = cc.ln_10(P, RM);
    let log10 = ln_x.div(&ln10, P, RM);
    let exponent = log10.floor();
    let frac = log10.sub(&exponent, P, RM);
    let mantissa = to_f64(&frac.mul(&ln10, P, RM).exp(P, RM, &mut cc));
    format!("{:.*}e+{}", digits - 1, mantissa, to_f64(&exponent) as i64)
}

#[test]
fn c1_c2_match_independent_big_float() {
    let s = p1_spec();
    let (c0, ez) = (455.19, 6.408);
    let got = compute_c1_c2(&s, 8.2, c0, ez).unwrap();
    let (g1, g2, ln_c1, ln_c2) = oracle_logs(&s, 8.2, c0, ez);
    assert!((got.gamma1.to_f64() / g1 - 1.0).abs() < 1e-13);
    assert!((got.gamma2.to_f64() / g2 - 1.0).abs() < 1e-13);
    assert_eq!(got.c1.to_scientific(12), oracle_scientific(&ln_c1, 12));
    assert_eq!(got.c2.to_scientific(12), oracle_scientific(&ln_c2, 12));
}

#[test]
fn c1_small_case_matches_to_twelve_digits() {
    // small C0 keeps C1 inside the f64 range so it can be compared directly
    let s = p1_spec();
    let got = compute_c1_c2(&s, 0.5, 1e-9, 2.0).unwrap();
    let (_, _, ln_c1, _) = oracle_logs(&s, 0.5, 1e-9, 2.0);
    let c1 = got.c1.to_f64();
    let want = to_f64(&ln_c1).exp();
    assert!((c1 / want - 1.0).abs() < 1e-12, "{c1} vs {want}");
}

#[test]
fn transient_bound_matches_big_float() {
    let s = p1_spec();
    let sched = StepSchedule::polynomial(8.2, 2.0 / 3.0, 3.5, 1.0).unwrap();
    let (ks, v0) = (40u64, 14.18);
    let got = transient_bound(&s, &sched, ks, v0).unwrap().to_f64();
    let l = big(s.lambda1);
    let growth = big(9.2).powi(2 * ks as usize, P, RM);
    let bias = big(8.0 * (3.5 + s.gamma * s.rho * 8.2))
        .mul(&growth, P, RM)
        .mul(&big(v0), P, RM)
        .div(&big(3.5).mul(&l.powi(2, P, RM), P, RM), P, RM);
    let noise = big(25.0)
        .mul(&big(s.b_bound + s.y_star_norm).powi(2, P, RM), P, RM)
        .mul(&growth, P, RM)
        .div(&l.powi(6, P, RM), P, RM);
    let want = to_f64(&bias.add(&noise, P, RM));
    assert!((got / want - 1.0).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn zero_noise_constants_vanish() {
    let s = p1_spec();
    let c = compute_c1_c2(&s, 8.2, 0.0, 0.0).unwrap();
    assert!(c.c1.is_zero());
}

#[test]
fn p1_rate_constants_report() {
    let s = p1_spec();
    let sched = StepSchedule::polynomial(8.2, 2.0 / 3.0, 3.5, 1.0).unwrap();
    let p = ProblemInstance::scalar(0.25, 0.1, -0.1, 0.25, 0.5, 0.25);
    let chain = FiniteMarkovChain::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
    let table = SampleTable::with_spread(&p, &chain, 0.2).unwrap();
    let mix = MixingProfile::compute(&chain, &table).unwrap();
    let rc = RateConstants::from_parts(&s, &sched, 455.19, 40, mix.c_geometric(), 6.408, 14.18).unwrap();
    let report = rc.report();
    let c1 = report["c1"].as_str().unwrap();
    assert!(c1.contains("e+4996"), "{c1}");
    assert!(rc.psi1 > 1e80);
    // Ψ2 carries C1 and so exceeds it
    assert!(rc.psi2 > rc.c1);
}

#[test]
fn bound_curve_decays_after_transient() {
    let s = p1_spec();
    let sched = StepSchedule::polynomial(8.2, 2.0 / 3.0, 3.5, 1.0).unwrap();
    let rc = RateConstants::compute(&s, &sched, &ConstantTau(3), 1.0, 1.0).unwrap();
    let ks = [100u64, 1_000, 10_000, 100_000, 1_000_000];
    let curve = theorem_bound_curve(&rc, &ks).unwrap();
    for w in curve.windows(2) {
        assert!(w[1].detailed < w[0].detailed);
        assert!(w[1].simplified < w[0].simplified);
    }
}

#[test]
fn simplified_bound_value() {
    assert!((simplified_bound(10.0, 8.0, 1.0, 1000) - 0.09).abs() < 1e-15);
}

proptest! {
    #[test]
    fn c1_monotone_in_c0(c0 in 0.0f64..50.0, extra in 0.01f64..50.0, ez in 0.0f64..10.0) {
        let s = p1_spec();
        let lo = compute_c1_c2(&s, 1.0, c0, ez).unwrap();
        let hi = compute_c1_c2(&s, 1.0, c0 + extra, ez).unwrap();
        prop_assert!(hi.c1 >= lo.c1);
        prop_assert!(hi.c2 >= lo.c2);
    }

    #[test]
    fn extended_matches_f64_in_range(a in -1e3f64..1e3, b in 1e-3f64..1e3) {
        let x = (ExtReal::lit(a) * ExtReal::lit(b) + ExtReal::lit(a) / ExtReal::lit(b)).to_f64();
        let want = a * b + a / b;
        prop_assert!((x - want).abs() <= 1e-14 * want.abs().max(1.0));
    }
}
