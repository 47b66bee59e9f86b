//! Step-size pairs `(α_k, β_k)`, their certification, the transient index `K*`
//! and the series constant `C0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::MixingProfile;
use crate::problem::SpectralSummary;

/// Default scan limit of [`k_star`].
pub const K_STAR_LIMIT: u64 = 1_000_000_000;

/// End of the run-by-run part of the mixing tail of `C0`.
const TAIL_BLOCK_END: u64 = 1_000_000_000_000_000_000;

/// Default number of explicitly summed terms in [`c0_estimate`].
pub const C0_TERMS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepFamily {
    /// `scale / (k+1)^exponent`.
    Polynomial { scale: f64, exponent: f64 },
    Constant(f64),
}

impl StepFamily {
    pub fn polynomial(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!("step scale must be positive and finite, got {scale}")));
        }
        if !(exponent > 0.0) || !exponent.is_finite() {
            return Err(Error::InvalidInput(format!("step exponent must be positive and finite, got {exponent}")));
        }
        Ok(StepFamily::Polynomial { scale, exponent })
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("constant step must be positive and finite, got {c}")));
        }
        Ok(StepFamily::Constant(c))
    }

    /// Value at `k`; negative indices take the `k = 0` value.
    pub fn value(&self, k: i64) -> f64 {
        match *self {
            StepFamily::Polynomial { scale, exponent } => {
                let n = (k.max(0) + 1) as f64;
                if exponent == 1.0 {
                    scale / n
                } else {
                    scale / n.powf(exponent)
                }
            }
            StepFamily::Constant(c) => c,
        }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            StepFamily::Polynomial { scale, .. } => scale,
            StepFamily::Constant(c) => c,
        }
    }

    /// Decay exponent; zero for constant steps.
    pub fn exponent(&self) -> f64 {
        match *self {
            StepFamily::Polynomial { exponent, .. } => exponent,
            StepFamily::Constant(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub alpha: StepFamily,
    pub beta: StepFamily,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaJson {
    Polynomial { a0: f64, exp: f64 },
    Constant { constant: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaJson {
    Polynomial { b0: f64, exp: f64 },
    Constant { constant: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleJson {
    pub alpha: AlphaJson,
    pub beta: BetaJson,
}

impl StepSchedule {
    /// `α_k = a0/(k+1)^a`, `β_k = b0/(k+1)^b`.
    pub fn polynomial(a0: f64, a: f64, b0: f64, b: f64) -> Result<Self> {
        Ok(StepSchedule { alpha: StepFamily::polynomial(a0, a)?, beta: StepFamily::polynomial(b0, b)? })
    }

    pub fn alpha(&self, k: i64) -> f64 {
        self.alpha.value(k)
    }

    pub fn beta(&self, k: i64) -> f64 {
        self.beta.value(k)
    }

    pub fn step_values(&self, k: i64) -> (f64, f64) {
        (self.alpha(k), self.beta(k))
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha.value(0)
    }

    pub fn beta0(&self) -> f64 {
        self.beta.value(0)
    }

    pub fn from_json_value(raw: ScheduleJson) -> Result<Self> {
        let alpha = match raw.alpha {
            AlphaJson::Polynomial { a0, exp } => StepFamily::polynomial(a0, exp)?,
            AlphaJson::Constant { constant } => StepFamily::constant(constant)?,
        };
        let beta = match raw.beta {
            BetaJson::Polynomial { b0, exp } => StepFamily::polynomial(b0, exp)?,
            BetaJson::Constant { constant } => StepFamily::constant(constant)?,
        };
        Ok(StepSchedule { alpha, beta })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ScheduleJson = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::from_json_value(raw)
    }

    pub fn to_json_value(&self) -> ScheduleJson {
        let alpha = match self.alpha {
            StepFamily::Polynomial { scale, exponent } => AlphaJson::Polynomial { a0: scale, exp: exponent },
            StepFamily::Constant(c) => AlphaJson::Constant { constant: c },
        };
        let beta = match self.beta {
            StepFamily::Polynomial { scale, exponent } => BetaJson::Polynomial { b0: scale, exp: exponent },
            StepFamily::Constant(c) => BetaJson::Constant { constant: c },
        };
        ScheduleJson { alpha, beta }
    }

    /// Failures of the divergence and summability requirements.
    pub fn summability_failures(&self) -> Vec<String> {
        let mut reasons = Vec::new();
        let (a, b) = (self.alpha.exponent(), self.beta.exponent());
        if matches!(self.alpha, StepFamily::Constant(_)) {
            reasons.push("constant alpha: sum of alpha_k^2 diverges".to_string());
        }
        if matches!(self.beta, StepFamily::Constant(_)) {
            reasons.push("constant beta: sum of beta_k^2 diverges".to_string());
        }
        if !reasons.is_empty() {
            return reasons;
        }
        if a > 1.0 {
            reasons.push(format!("sum of alpha_k converges: a = {a} > 1"));
        }
        if b > 1.0 {
            reasons.push(format!("sum of beta_k converges: b = {b} > 1"));
        }
        if 2.0 * a <= 1.0 {
            reasons.push(format!("sum of alpha_k^2 (and of the mixing term) diverges: 2a = {} <= 1", 2.0 * a));
        }
        if 2.0 * b <= 1.0 {
            reasons.push(format!("sum of beta_k^2 diverges: 2b = {} <= 1", 2.0 * b));
        }
        if 2.0 * b - a <= 1.0 {
            reasons.push(format!("sum of beta_k^2/alpha_k diverges: 2b - a = {} <= 1", 2.0 * b - a));
        }
        reasons
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificationStatus {
    Certified,
    Heuristic,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certification {
    pub status: CertificationStatus,
    pub reasons: Vec<String>,
}

impl Certification {
    pub fn is_certified(&self) -> bool {
        self.status == CertificationStatus::Certified
    }
}

/// Checks a schedule against the step-size conditions of the rate theorem.
pub fn validate_schedule(s: &StepSchedule, spec: &SpectralSummary) -> Certification {
    let summability = s.summability_failures();
    if !summability.is_empty() {
        return Certification { status: CertificationStatus::Invalid, reasons: summability };
    }
    let mut reasons = Vec::new();
    let (a0, b0) = (s.alpha0(), s.beta0());
    let (a, b) = (s.alpha.exponent(), s.beta.exponent());
    if b0 < 1.0 / spec.rho {
        reasons.push(format!("beta0 = {b0} < 1/rho = {}", 1.0 / spec.rho));
    }
    let ratio_cap = spec.gamma / (2.0 * spec.rho);
    if b0 / a0 > ratio_cap {
        reasons.push(format!("beta0/alpha0 = {} > gamma/(2 rho) = {ratio_cap}", b0 / a0));
    }
    if b < a {
        reasons.push(format!("beta_k/alpha_k increases: b = {b} < a = {a}"));
    }
    if b0 > a0 {
        reasons.push(format!("beta_0 = {b0} exceeds alpha_0 = {a0}"));
    }
    let status = if reasons.is_empty() { CertificationStatus::Certified } else { CertificationStatus::Heuristic };
    Certification { status, reasons }
}

/// Source of mixing times `τ(α)` together with an envelope
/// `τ(α) ≤ slope·ln(1/α) + offset` for small `α`.
pub trait MixingTimes {
    fn tau(&self, alpha: f64) -> u64;
    fn tau_envelope(&self) -> (f64, f64);
    /// `C` of `τ(α) ≈ C·ln(1/α)`.
    fn c_geometric(&self) -> f64;
}

impl MixingTimes for MixingProfile {
    fn tau(&self, alpha: f64) -> u64 {
        MixingProfile::tau(self, alpha)
    }

    fn tau_envelope(&self) -> (f64, f64) {
        MixingProfile::tau_envelope(self)
    }

    fn c_geometric(&self) -> f64 {
        MixingProfile::c_geometric(self)
    }
}

/// The same mixing time at every tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantTau(pub u64);

impl MixingTimes for ConstantTau {
    fn tau(&self, _alpha: f64) -> u64 {
        self.0
    }

    fn tau_envelope(&self) -> (f64, f64) {
        (0.0, self.0 as f64)
    }

    fn c_geometric(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransientWitness {
    pub k: u64,
    pub tau: u64,
    /// `Σ_{t=k−τ}^{k} α_t`.
    pub window_sum: f64,
    /// `τ·α_{k−τ}`.
    pub tau_alpha: f64,
}

impl TransientWitness {
    pub fn holds(&self) -> bool {
        self.window_sum <= std::f64::consts::LN_2 && self.tau_alpha <= std::f64::consts::LN_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransientIndex {
    pub k_star: u64,
    pub at: TransientWitness,
    /// The quantities at `k_star − 1`; absent when `k_star = 0`.
    pub before: Option<TransientWitness>,
}

/// Both transient quantities at step `k`, with `α_t = α_0` for `t < 0`.
pub fn transient_witness(s: &StepSchedule, mix: &impl MixingTimes, k: u64) -> TransientWitness {
    let ki = k as i64;
    let tau = mix.tau(s.alpha(ki));
    let start = ki - tau as i64;
    let window_sum = (start..=ki).map(|t| s.alpha(t)).sum();
    TransientWitness { k, tau, window_sum, tau_alpha: tau as f64 * s.alpha(start) }
}

/// Smallest `k` at which both transient inequalities hold.
pub fn k_star(s: &StepSchedule, mix: &impl MixingTimes) -> Result<TransientIndex> {
    k_star_with_limit(s, mix, K_STAR_LIMIT)
}

pub fn k_star_with_limit(s: &StepSchedule, mix: &impl MixingTimes, limit: u64) -> Result<TransientIndex> {
    let mut before = None;
    for k in 0..=limit {
        let at = transient_witness(s, mix, k);
        if at.holds() {
            return Ok(TransientIndex { k_star: k, at, before });
        }
        before = Some(at);
    }
    Err(Error::NotFound { limit })
}

/// Explicit partial sum and integral tail bound of one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPart {
    pub partial: f64,
    pub tail: f64,
}

impl SeriesPart {
    pub fn total(&self) -> f64 {
        self.partial + self.tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C0Estimate {
    pub terms: u64,
    /// `Σ τ_k α_{k−τ_k} α_k` with `τ_k = min(τ(α_k), k)`.
    pub mixing: SeriesPart,
    pub beta_sq: SeriesPart,
    pub alpha_sq: SeriesPart,
    /// `Σ β_k²/α_k`.
    pub ratio: SeriesPart,
}

impl C0Estimate {
    pub fn total(&self) -> f64 {
        self.mixing.total() + self.beta_sq.total() + self.alpha_sq.total() + self.ratio.total()
    }
}

/// Upper estimate of `C0`, summing the first [`C0_TERMS`] terms exactly.
pub fn c0_estimate(s: &StepSchedule, mix: &impl MixingTimes) -> Result<C0Estimate> {
    c0_estimate_with_terms(s, mix, C0_TERMS)
}

pub fn c0_estimate_with_terms(s: &StepSchedule, mix: &impl MixingTimes, terms: u64) -> Result<C0Estimate> {
    let failures = s.summability_failures();
    if !failures.is_empty() {
        return Err(Error::Diverges(failures.join("; ")));
    }
    if terms == 0 {
        return Err(Error::InvalidInput("c0 needs at least one explicit term".into()));
    }
    let mut sums = [Neumaier::default(); 4];
    for k in 0..terms as i64 {
        let (a, b) = s.step_values(k);
        let tau = (mix.tau(a) as i64).min(k);
        sums[0].add(tau as f64 * s.alpha(k - tau) * a);
        sums[1].add(b * b);
        sums[2].add(a * a);
        sums[3].add(b * b / a);
    }

    let (a0, a) = (s.alpha.scale(), s.alpha.exponent());
    let (b0, b) = (s.beta.scale(), s.beta.exponent());
    let m = (terms + 1) as f64;
    // Σ_{k ≥ terms} c/(k+1)^p ≤ c·m^{1−p}/(p−1) + c/m^p with m = terms+1
    let power_tail = |c: f64, p: f64| c * m.powf(1.0 - p) / (p - 1.0) + c / m.powf(p);

    let mixing_tail = mixing_tail(s, mix, terms);
    Ok(C0Estimate {
        terms,
        mixing: SeriesPart { partial: sums[0].value(), tail: mixing_tail },
        beta_sq: SeriesPart { partial: sums[1].value(), tail: power_tail(b0 * b0, 2.0 * b) },
        alpha_sq: SeriesPart { partial: sums[2].value(), tail: power_tail(a0 * a0, 2.0 * a) },
        ratio: SeriesPart { partial: sums[3].value(), tail: power_tail(b0 * b0 / a0, 2.0 * b - a) },
    })
}

/// Upper bound on `Σ_{k ≥ m} τ(α_k)·α_{k−τ}·α_k` for polynomial `α`.
///
/// Summed over runs of constant `τ` up to [`TAIL_BLOCK_END`], where within a run
/// `α_{k−τ} ≤ ((k0+1)/(k0+1−τ))^a·α_k`; beyond it `τ(α_k) ≤ u·ln(k+1) + v` from the
/// mixing envelope.
fn mixing_tail(s: &StepSchedule, mix: &impl MixingTimes, m: u64) -> f64 {
    let (a0, a) = (s.alpha.scale(), s.alpha.exponent());
    let p = 2.0 * a;
    let tau_at = |k: u64| mix.tau(s.alpha(k as i64));
    // Σ_{j=k}^{e} (j+1)^{−p} ≤ (k+1)^{−p} + ((k+1)^{1−p} − (e+2)^{1−p})/(p−1)
    let power_sum = |k: u64, e: u64| {
        let (lo, hi) = ((k + 1) as f64, (e + 2) as f64);
        lo.powf(-p) + (lo.powf(1.0 - p) - hi.powf(1.0 - p)) / (p - 1.0)
    };
    let mut sum = Neumaier::default();
    let mut k = m;
    while k < TAIL_BLOCK_END {
        let tau = tau_at(k);
        if tau > k {
            sum.add(tau as f64 * s.alpha(k as i64 - tau as i64) * s.alpha(k as i64));
            k += 1;
            continue;
        }
        // last index of the run with this τ
        let mut step = 1u64;
        while k + step < TAIL_BLOCK_END && tau_at(k + step) == tau {
            step = step.saturating_mul(2);
        }
        let (mut lo, mut hi) = (k + step / 2, (k + step).min(TAIL_BLOCK_END));
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if tau_at(mid) == tau {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ratio = ((k + 1) as f64 / (k + 1 - tau) as f64).powf(a);
        sum.add(tau as f64 * ratio * a0 * a0 * power_sum(k, lo));
        k = lo + 1;
    }

    // τ(α_k) ≤ u·ln(k+1) + v and α_{k−τ} ≤ 2^a α_k once τ ≤ (k+1)/2
    let m = (TAIL_BLOCK_END + 1) as f64;
    let (slope, offset) = mix.tau_envelope();
    let (u, v) = (slope * a, (offset - slope * a0.ln()).max(0.0));
    let c = 2f64.powf(a) * a0 * a0;
    let log_tail = u * m.powf(1.0 - p) * (m.ln() / (p - 1.0) + 1.0 / (p - 1.0).powi(2)) + u * m.ln() / m.powf(p);
    sum.add(c * (log_tail + v * (m.powf(1.0 - p) / (p - 1.0) + 1.0 / m.powf(p))));
    sum.value()
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    compensation: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_values() {
        let f = StepFamily::polynomial(0.5, 2.0 / 3.0).unwrap();
        assert_eq!(f.value(0), 0.5);
        assert!((f.value(7) - 0.125).abs() < 1e-15);
        assert_eq!(f.value(-3), f.value(0));
    }

    #[test]
    fn zero_scale_rejected() {
        assert!(StepFamily::polynomial(0.0, 1.0).is_err());
        assert!(StepFamily::constant(0.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = StepSchedule::from_json(r#"{"alpha":{"a0":8.2,"exp":0.6667},"beta":{"b0":3.5,"exp":1.0}}"#).unwrap();
        assert_eq!(s.alpha0(), 8.2);
        assert_eq!(s.beta.exponent(), 1.0);
        let back = serde_json::to_string(&s.to_json_value()).unwrap();
        assert_eq!(StepSchedule::from_json(&back).unwrap(), s);
        let c = StepSchedule::from_json(r#"{"alpha":{"a0":1,"exp":0.6},"beta":{"constant":0.01}}"#).unwrap();
        assert_eq!(c.beta, StepFamily::Constant(0.01));
    }

    #[test]
    fn compensated_sum_of_small_terms() {
        let mut n = Neumaier::default();
        n.add(1.0);
        for _ in 0..10 {
            n.add(1e-16);
        }
        assert_eq!(n.value(), 1.0 + 1e-15);
    }
}
