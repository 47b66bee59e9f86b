//! Closed-form constants of the rate analysis, evaluated in extended precision.

use serde::Serialize;
use serde_json::{json, Value};

use crate::engine::MseCurve;
use crate::error::{Error, Result};
use crate::extended::ExtReal;
use crate::problem::SpectralSummary;
use crate::schedule::{c0_estimate, k_star, MixingTimes, StepSchedule};

/// Significant digits of decimal strings in reports.
pub const REPORT_DIGITS: usize = 17;

/// Slack, in standard errors, of [`empirical_recursion_check`].
pub const RECURSION_SLACK_SE: f64 = 3.0;

fn ext(x: f64) -> Result<ExtReal> {
    ExtReal::from_f64(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct C1C2 {
    pub c1: ExtReal,
    pub c2: ExtReal,
    pub gamma1: ExtReal,
    pub gamma2: ExtReal,
    /// `2·C0·Γ1`, the exponent inside `C1`.
    pub exponent: ExtReal,
}

/// `Γ1 = 30(γ+1)(8λ1+1)⁵(1+α0)²/(γλ1⁶)`.
pub fn gamma1(spec: &SpectralSummary, alpha0: f64) -> Result<ExtReal> {
    let l = ext(spec.lambda1)?;
    Ok(ext(30.0)? * ext(spec.gamma + 1.0)? * (l.clone() * 8.0 + 1.0).powi(5)? * ext(1.0 + alpha0)?.powi(2)?
        / (ext(spec.gamma)? * l.powi(6)?))
}

/// `Γ2 = 38(1+8λ1)⁵(2B+‖Y*‖)²/λ1⁸`.
pub fn gamma2(spec: &SpectralSummary) -> Result<ExtReal> {
    let l = ext(spec.lambda1)?;
    Ok(ext(38.0)? * (l.clone() * 8.0 + 1.0).powi(5)? * ext(2.0 * spec.b_bound + spec.y_star_norm)?.powi(2)? / l.powi(8)?)
}

/// `C1 = (E‖Ẑ0‖² + C0·Γ2)·exp(2·C0·Γ1)` and
/// `C2 = (2(13γρ+3)(2B+‖Y*‖)² + 9C1(3+7γρ)/(4ργ))·(8λ1+1)⁵/λ1⁸`.
pub fn compute_c1_c2(spec: &SpectralSummary, alpha0: f64, c0: f64, e_z0_sq: f64) -> Result<C1C2> {
    if !(c0 >= 0.0) || !(e_z0_sq >= 0.0) || !(alpha0 > 0.0) || !(spec.lambda1 > 0.0) || !(spec.gamma > 0.0) || !(spec.rho > 0.0) {
        return Err(Error::InvalidInput("constants need c0, E|Z0|^2 >= 0 and alpha0, lambda1, gamma, rho > 0".into()));
    }
    let g1 = gamma1(spec, alpha0)?;
    let g2 = gamma2(spec)?;
    let c0x = ext(c0)?;
    let exponent = ext(2.0)? * c0x.clone() * g1.clone();
    let growth = exponent.exp().map_err(|_| {
        Error::Overflow(format!("exp({}) in C1 exceeds the extended range", exponent.to_scientific(6)))
    })?;
    let c1 = (ext(e_z0_sq)? + c0x * g2.clone()) * growth;
    let c2 = c2_from_c1(spec, &c1)?;
    Ok(C1C2 { c1, c2, gamma1: g1, gamma2: g2, exponent })
}

pub fn c2_from_c1(spec: &SpectralSummary, c1: &ExtReal) -> Result<ExtReal> {
    let gr = spec.gamma * spec.rho;
    let l = ext(spec.lambda1)?;
    let first = ext(2.0 * (13.0 * gr + 3.0))? * ext(2.0 * spec.b_bound + spec.y_star_norm)?.powi(2)?;
    let second = c1.clone() * ext(9.0 * (3.0 + 7.0 * gr))? / ext(4.0 * gr)?;
    Ok((first + second) * (l.clone() * 8.0 + 1.0).powi(5)? / l.powi(8)?)
}

/// Bound on `V` at the transient index:
/// `8(β0+γρα0)(1+α0)^{2K*}·V0/(β0λ1²) + 25(B+‖Y*‖)²(1+α0)^{2K*}/λ1⁶`.
pub fn transient_bound(spec: &SpectralSummary, schedule: &StepSchedule, k_star: u64, v0: f64) -> Result<ExtReal> {
    let (a0, b0) = (schedule.alpha0(), schedule.beta0());
    let growth = ext(1.0 + a0)?.powi(2 * k_star)?;
    let l = ext(spec.lambda1)?;
    let bias = ext(8.0 * (b0 + spec.gamma * spec.rho * a0))? * growth.clone() * ext(v0)? / (ext(b0)? * l.powi(2)?);
    let noise = ext(25.0)? * ext(spec.b_bound + spec.y_star_norm)?.powi(2)? * growth / l.powi(6)?;
    Ok(bias + noise)
}

/// `(Ψ1, Ψ2)` of the combined bias-variance bound `Ψ1·V0/k + Ψ2/k^{2/3}`.
pub fn psi(spec: &SpectralSummary, schedule: &StepSchedule, k_star: u64, c1: &ExtReal, c2: &ExtReal, c_mix: f64) -> Result<(ExtReal, ExtReal)> {
    let (a0, b0) = (schedule.alpha0(), schedule.beta0());
    let (g, r) = (spec.gamma, spec.rho);
    let growth = ext(1.0 + a0)?.powi(2 * k_star)?;
    let k = ExtReal::from_u64(k_star);
    let l = ext(spec.lambda1)?;
    let psi1 = ext(8.0 * (b0 + g * r * a0))? * k.clone() * growth.clone() / (ext(b0)? * l.clone().powi(2)?);
    let transient = ext(25.0)? * k * ext(spec.b_bound + spec.y_star_norm)?.powi(2)? * growth / l.clone().powi(6)?;
    let psi2 = transient + curvature_term(spec, a0, b0, c1)? + c2.clone() * ext(b0 * (a0 + 2.0 * b0 + 6.0 * c_mix) / 2.0)?;
    Ok((psi1, psi2))
}

/// `8C1(1+α0)²β0³/(ργ²λ1²α0²)`.
fn curvature_term(spec: &SpectralSummary, a0: f64, b0: f64, c1: &ExtReal) -> Result<ExtReal> {
    let (g, r, l) = (spec.gamma, spec.rho, spec.lambda1);
    Ok(c1.clone() * ext(8.0)? * ext(1.0 + a0)?.powi(2)? * ext(b0)?.powi(3)?
        / (ext(r)? * ext(g)?.powi(2)? * ext(l)?.powi(2)? * ext(a0)?.powi(2)?))
}

/// Every constant of the rate analysis for one problem and schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct RateConstants {
    pub c0: f64,
    pub c1: ExtReal,
    pub c2: ExtReal,
    pub gamma1: ExtReal,
    pub gamma2: ExtReal,
    pub k_star: u64,
    pub v0: f64,
    pub e_z0_sq: f64,
    pub v_kstar_bound: ExtReal,
    pub psi1: ExtReal,
    pub psi2: ExtReal,
    pub gamma: f64,
    pub rho: f64,
    pub lambda1: f64,
    pub sigman: f64,
    pub b_bound: f64,
    pub y_star_norm: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub c_mix: f64,
}

impl RateConstants {
    /// Computes `C0` and `K*` from the mixing times, then everything else.
    pub fn compute(spec: &SpectralSummary, schedule: &StepSchedule, mix: &impl MixingTimes, e_z0_sq: f64, v0: f64) -> Result<Self> {
        let c0 = c0_estimate(schedule, mix)?.total();
        let ks = k_star(schedule, mix)?.k_star;
        Self::from_parts(spec, schedule, c0, ks, mix.c_geometric(), e_z0_sq, v0)
    }

    pub fn from_parts(
        spec: &SpectralSummary,
        schedule: &StepSchedule,
        c0: f64,
        k_star: u64,
        c_mix: f64,
        e_z0_sq: f64,
        v0: f64,
    ) -> Result<Self> {
        let cc = compute_c1_c2(spec, schedule.alpha0(), c0, e_z0_sq)?;
        let v_kstar_bound = transient_bound(spec, schedule, k_star, v0)?;
        let (psi1, psi2) = psi(spec, schedule, k_star, &cc.c1, &cc.c2, c_mix)?;
        Ok(RateConstants {
            c0,
            c1: cc.c1,
            c2: cc.c2,
            gamma1: cc.gamma1,
            gamma2: cc.gamma2,
            k_star,
            v0,
            e_z0_sq,
            v_kstar_bound,
            psi1,
            psi2,
            gamma: spec.gamma,
            rho: spec.rho,
            lambda1: spec.lambda1,
            sigman: spec.sigman,
            b_bound: spec.b_bound,
            y_star_norm: spec.y_star_norm,
            alpha0: schedule.alpha0(),
            beta0: schedule.beta0(),
            c_mix,
        })
    }

    /// JSON object with every value as a decimal string.
    pub fn report(&self) -> Value {
        let d = |x: &ExtReal| x.to_scientific(REPORT_DIGITS);
        let f = |x: f64| ExtReal::lit(x).to_scientific(REPORT_DIGITS);
        json!({
            "c0": f(self.c0),
            "c1": d(&self.c1),
            "c2": d(&self.c2),
            "gamma1": d(&self.gamma1),
            "gamma2": d(&self.gamma2),
            "k_star": self.k_star.to_string(),
            "v0": f(self.v0),
            "e_z0_sq": f(self.e_z0_sq),
            "v_kstar_bound": d(&self.v_kstar_bound),
            "psi1": d(&self.psi1),
            "psi2": d(&self.psi2),
            "gamma": f(self.gamma),
            "rho": f(self.rho),
            "lambda1": f(self.lambda1),
            "sigman": f(self.sigman),
            "b_bound": f(self.b_bound),
            "y_star_norm": f(self.y_star_norm),
            "alpha0": f(self.alpha0),
            "beta0": f(self.beta0),
            "c_mix": f(self.c_mix),
        })
    }
}

/// `Ψ1·V0/k + Ψ2/k^{2/3}`.
pub fn simplified_bound(psi1: f64, psi2: f64, v0: f64, k: u64) -> f64 {
    let kf = k as f64;
    let k23 = kf.cbrt() * kf.cbrt();
    psi1 * v0 / kf + psi2 / k23
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundPoint {
    pub k: u64,
    /// The detailed bound on `V_k`, with `V_{K*}` replaced by its transient bound.
    pub detailed: ExtReal,
    /// `Ψ1·V0/k + Ψ2/k^{2/3}`.
    pub simplified: ExtReal,
}

/// Rate bounds on `V_k` at each `k > 0` of `ks`:
///
/// `K*·V_{K*}/k + (8C1(1+α0)²β0³/(ργ²λ1²α0²) + 3C2α0β0/2)/k^{2/3}
///  + C2β0²(1+ln k)/k + 3·C·C2·β0·ln²k/k`
pub fn theorem_bound_curve(c: &RateConstants, ks: &[u64]) -> Result<Vec<BoundPoint>> {
    let spec = SpectralSummary {
        gamma: c.gamma,
        rho: c.rho,
        lambda1: c.lambda1,
        lambdan: c.lambda1,
        sigma1: c.rho,
        sigman: c.sigman,
        b_bound: c.b_bound,
        y_star_norm: c.y_star_norm,
    };
    let variance = if c.c1.is_zero() {
        ExtReal::zero()
    } else {
        curvature_term(&spec, c.alpha0, c.beta0, &c.c1)?
    } + c.c2.clone() * ext(1.5 * c.alpha0 * c.beta0)?;
    let bias = ExtReal::from_u64(c.k_star) * c.v_kstar_bound.clone();
    ks.iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let kf = k as f64;
            let kx = ExtReal::from_u64(k);
            let k23 = ext(kf.cbrt() * kf.cbrt())?;
            let log = kf.ln();
            let detailed = bias.clone() / kx.clone()
                + variance.clone() / k23.clone()
                + c.c2.clone() * ext(c.beta0 * c.beta0 * (1.0 + log) / kf)?
                + c.c2.clone() * ext(3.0 * c.c_mix * c.beta0 * log * log / kf)?;
            let simplified = c.psi1.clone() * ext(c.v0)? / kx + c.psi2.clone() / k23;
            Ok(BoundPoint { k, detailed, simplified })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecursionCheck {
    pub pairs_checked: usize,
    pub passed: usize,
    /// `passed / pairs_checked`; one when no pair qualifies.
    pub pass_fraction: f64,
}

/// Inputs of the one-step recursion: `C1`, `C2` and the spectral quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionConstants {
    pub c1: ExtReal,
    pub c2: ExtReal,
    pub rho: f64,
    pub gamma: f64,
    pub lambda1: f64,
    pub alpha0: f64,
    pub k_star: u64,
}

impl From<&RateConstants> for RecursionConstants {
    fn from(c: &RateConstants) -> Self {
        RecursionConstants {
            c1: c.c1.clone(),
            c2: c.c2.clone(),
            rho: c.rho,
            gamma: c.gamma,
            lambda1: c.lambda1,
            alpha0: c.alpha0,
            k_star: c.k_star,
        }
    }
}

/// Tests, for each checkpoint pair `(k, k+1)` with `k ≥ K*`,
///
/// `V̂_{k+1} ≤ (1−ρβ_k)V̂_k + 2C1(1+α0)²β_k³/(ργ²λ1²α_k²)
///  + C2(τ_k α_{k−τ_k} β_k + β_k² + α_kβ_k) + 3·SE`
///
/// where `SE` is the standard error of the paired difference
/// `V_{k+1} − (1−ρβ_k)V_k` across trajectories.
pub fn empirical_recursion_check(
    curve: &MseCurve,
    c: &RecursionConstants,
    schedule: &StepSchedule,
    mix: &impl MixingTimes,
) -> Result<RecursionCheck> {
    let (mut checked, mut passed) = (0, 0);
    let n = curve.n_traj as f64;
    let curvature_scale = ext(2.0 * (1.0 + c.alpha0).powi(2) / (c.rho * c.gamma * c.gamma * c.lambda1 * c.lambda1))? * c.c1.clone();
    for i in 0..curve.checkpoints.len().saturating_sub(1) {
        let k = curve.checkpoints[i];
        if curve.checkpoints[i + 1] != k + 1 || k < c.k_star {
            continue;
        }
        let ki = k as i64;
        let (a, b) = schedule.step_values(ki);
        let tau = mix.tau(a);
        let contraction = 1.0 - c.rho * b;
        let var_diff = curve.var_lyapunov[i + 1] + contraction * contraction * curve.var_lyapunov[i]
            - 2.0 * contraction * curve.cov_next_lyapunov[i];
        let se = (var_diff.max(0.0) / n).sqrt();
        let lhs = curve.lyapunov[i + 1];
        let rhs_plain = contraction * curve.lyapunov[i] + RECURSION_SLACK_SE * se;
        let noise = tau as f64 * schedule.alpha(ki - tau as i64) * b + b * b + a * b;
        let rhs = ext(rhs_plain)? + curvature_scale.clone() * ext(b * b * b / (a * a))? + c.c2.clone() * ext(noise)?;
        checked += 1;
        if ext(lhs)? <= rhs {
            passed += 1;
        }
    }
    let pass_fraction = if checked == 0 { 1.0 } else { passed as f64 / checked as f64 };
    Ok(RecursionCheck { pairs_checked: checked, passed, pass_fraction })
}
