//! Restarted two-time-scale iteration with doubling accuracy targets, and the
//! iteration budgets of the restarted and plain methods.

use std::io::Write;

use serde::Serialize;

use crate::engine::{mean_and_se, run_parallel, IterateState, MseCurve, Simulator};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::markov::substream_seed;

/// Largest admissible epoch length or iteration budget.
pub const MAX_ITERATIONS: f64 = 4.611_686_018_427_388e18; // 2^62

/// Relative slack when testing `n ≥ x` for values that are integers in exact
/// arithmetic.
const CEIL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiSource {
    Theoretical,
    Empirical,
}

impl PsiSource {
    pub fn label(&self) -> &'static str {
        match self {
            PsiSource::Theoretical => "theoretical-psi",
            PsiSource::Empirical => "empirical-psi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestartConfig {
    pub delta0: f64,
    pub epsilon: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub max_epochs: u64,
    pub psi_source: PsiSource,
}

impl RestartConfig {
    pub fn new(delta0: f64, epsilon: f64, psi1: f64, psi2: f64, psi_source: PsiSource) -> Result<Self> {
        let cfg = RestartConfig { delta0, epsilon, psi1, psi2, max_epochs: 64, psi_source };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_max_epochs(mut self, max_epochs: u64) -> Self {
        self.max_epochs = max_epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.delta0, self.epsilon, self.psi1, self.psi2].iter().all(|v| v.is_finite());
        if !finite || !(self.delta0 > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput("restart needs finite delta0 > 0 and epsilon > 0".into()));
        }
        if self.psi1 < 0.0 || self.psi2 < 0.0 {
            return Err(Error::InvalidInput("psi1 and psi2 must be non-negative".into()));
        }
        Ok(())
    }

    /// `K = ⌈log2(Δ0/ε)⌉`, zero when `ε ≥ Δ0`.
    pub fn epoch_count(&self) -> u64 {
        let mut k = 0;
        let mut target = self.delta0;
        while target > self.epsilon {
            target /= 2.0;
            k += 1;
        }
        k
    }

    /// `Δ_k = Δ0·2^{−k}`.
    pub fn target(&self, k: u64) -> f64 {
        self.delta0 * 0.5f64.powi(k as i32)
    }
}

/// Smallest integer `n ≥ q^{3/2}`, decided through `n² ≥ q³`.
fn ceil_three_halves(q: f64) -> f64 {
    let n = q.powf(1.5).ceil();
    let cube = q * q * q;
    if n >= 1.0 && (n - 1.0) * (n - 1.0) >= cube * (1.0 - CEIL_SLACK) {
        n - 1.0
    } else {
        n
    }
}

/// `N_k = ⌈max{4Ψ1, Ψ2^{3/2}/(Δ0^{3/2}·2^{−3(k+1)/2})}⌉`.
pub fn epoch_length(cfg: &RestartConfig, k: u64) -> Result<u64> {
    if k == 0 {
        return Err(Error::InvalidInput("epochs are numbered from 1".into()));
    }
    let bias = (4.0 * cfg.psi1).ceil();
    let q = cfg.psi2 * 2f64.powi((k + 1) as i32) / cfg.delta0;
    let n = bias.max(ceil_three_halves(q));
    if !(n <= MAX_ITERATIONS) {
        return Err(Error::Overflow(format!("epoch {k} needs {n:e} iterations")));
    }
    Ok(n as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochEntry {
    pub epoch: u64,
    pub n_k: u64,
    pub cumulative_iters: u64,
    pub v_estimate: f64,
    pub v_se: f64,
    pub delta_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    /// Entry 0 is the initial point.
    pub entries: Vec<EpochEntry>,
    pub psi_source: PsiSource,
    pub n_traj: usize,
}

pub const EPOCH_CSV_HEADER: [&str; 6] = ["epoch", "n_k", "cumulative_iters", "v_estimate", "v_se", "delta_target"];

impl EpochLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidInput(format!("csv output: {e}"));
        w.write_record(EPOCH_CSV_HEADER).map_err(io)?;
        for e in &self.entries {
            w.write_record([
                e.epoch.to_string(),
                e.n_k.to_string(),
                e.cumulative_iters.to_string(),
                e.v_estimate.to_string(),
                e.v_se.to_string(),
                e.delta_target.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("csv output: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// One replica of a restarted run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaTrace {
    /// `V` at the start and at the end of every epoch.
    pub v: Vec<f64>,
    pub final_state: IterateState,
}

/// Epoch lengths `N_1..N_K`, checked against the epoch cap.
pub fn epoch_plan(cfg: &RestartConfig) -> Result<Vec<u64>> {
    cfg.validate()?;
    let k = cfg.epoch_count();
    if k > cfg.max_epochs {
        return Err(Error::BudgetExceeded { needed: k, cap: cfg.max_epochs });
    }
    (1..=k).map(|j| epoch_length(cfg, j)).collect()
}

/// Runs one replica: each epoch restarts the step-size index at 0 and continues
/// from the previous iterate and chain state.
pub fn restarted_trace(sim: &Simulator<'_>, plan: &[u64], x0: &Vector, y0: &Vector, seed: u64) -> Result<ReplicaTrace> {
    let mut stream = sim.stream(seed)?;
    let mut state = IterateState::new(x0.clone(), y0.clone());
    let mut v = vec![sim.lyapunov_at(&state.x, &state.y, 0)];
    let mut done = 0u64;
    for &n in plan {
        state.k = 0;
        sim.advance(&mut state, &mut stream, n).map_err(|e| match e {
            Error::NonFinite { step, trajectory } => Error::NonFinite { step: done + step, trajectory },
            other => other,
        })?;
        done += n;
        v.push(sim.lyapunov_at(&state.x, &state.y, n));
    }
    Ok(ReplicaTrace { v, final_state: state })
}

/// Monte Carlo restarted run over `n_traj` replicas; replica `i` uses the
/// substream seed of index `i`.
pub fn run_restarted(
    sim: &Simulator<'_>,
    cfg: &RestartConfig,
    x0: &Vector,
    y0: &Vector,
    n_traj: usize,
    base_seed: u64,
) -> Result<EpochLog> {
    if n_traj == 0 {
        return Err(Error::InvalidInput("at least one replica is required".into()));
    }
    let plan = epoch_plan(cfg)?;
    let traces = run_parallel(n_traj, |i| restarted_trace(sim, &plan, x0, y0, substream_seed(base_seed, i as u64)))?;
    let mut entries = Vec::with_capacity(plan.len() + 1);
    let mut cumulative = 0u64;
    for epoch in 0..=plan.len() {
        let values: Vec<f64> = traces.iter().map(|t| t.v[epoch]).collect();
        let (v_estimate, v_se) = mean_and_se(&values);
        let n_k = if epoch == 0 { 0 } else { plan[epoch - 1] };
        cumulative += n_k;
        entries.push(EpochEntry {
            epoch: epoch as u64,
            n_k,
            cumulative_iters: cumulative,
            v_estimate,
            v_se,
            delta_target: cfg.target(epoch as u64),
        });
    }
    Ok(EpochLog { entries, psi_source: cfg.psi_source, n_traj })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestartBudget {
    pub epochs: u64,
    pub total: u64,
    /// `4Ψ1⌈log2(Δ0/ε)⌉ + (4Ψ2)^{3/2}⌈ε^{−3/2}⌉`.
    pub printed_bound: f64,
    pub printed_holds: bool,
    /// `K(4Ψ1 + 1) + 2(4Ψ2)^{3/2}⌈ε^{−3/2}⌉`, which always dominates `total`.
    pub corrected_bound: f64,
}

pub fn budget_restarted(cfg: &RestartConfig) -> Result<RestartBudget> {
    let plan = epoch_plan(cfg)?;
    let total = plan.iter().try_fold(0u64, |acc, &n| acc.checked_add(n)).filter(|&t| (t as f64) <= MAX_ITERATIONS);
    let total = total.ok_or_else(|| Error::Overflow("restart budget exceeds 2^62 iterations".into()))?;
    let k = plan.len() as f64;
    let variance = (4.0 * cfg.psi2).powf(1.5) * cfg.epsilon.powf(-1.5).ceil();
    let printed_bound = 4.0 * cfg.psi1 * k + variance;
    let corrected_bound = k * (4.0 * cfg.psi1 + 1.0) + 2.0 * variance;
    Ok(RestartBudget {
        epochs: plan.len() as u64,
        total,
        printed_bound,
        printed_holds: total as f64 <= printed_bound,
        corrected_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlainBudget {
    /// Smallest `k` with `Ψ1V0/k + Ψ2/k^{2/3} ≤ ε`.
    pub iterations: u64,
    /// `⌈V0/ε⌉ + ⌈ε^{−3/2}⌉`.
    pub order_form: f64,
}

fn plain_bound(psi1: f64, psi2: f64, v0: f64, k: u64) -> f64 {
    let kf = k as f64;
    let c = kf.cbrt();
    psi1 * v0 / kf + psi2 / (c * c)
}

pub fn budget_plain(psi1: f64, psi2: f64, v0: f64, epsilon: f64) -> Result<PlainBudget> {
    if [psi1, psi2, v0].iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || !(epsilon > 0.0) {
        return Err(Error::InvalidInput("plain budget needs non-negative psi1, psi2, v0 and epsilon > 0".into()));
    }
    let within = |k: u64| plain_bound(psi1, psi2, v0, k) <= epsilon * (1.0 + CEIL_SLACK);
    let hi = (2.0 * psi1 * v0 / epsilon).ceil().max((2.0 * psi2 / epsilon).powf(1.5).ceil()).max(1.0);
    if !(hi <= MAX_ITERATIONS) {
        return Err(Error::Overflow(format!("plain budget exceeds 2^62 iterations ({hi:e})")));
    }
    let (mut lo, mut hi) = (0u64, hi as u64);
    // invariant: bound(hi) ≤ ε, and lo = 0 or bound(lo) > ε
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if within(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(PlainBudget { iterations: hi, order_form: (v0 / epsilon).ceil() + epsilon.powf(-1.5).ceil() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiFit {
    pub psi1: f64,
    pub psi2: f64,
    /// Factor applied to the least-squares coefficients so the fit bounds
    /// every point of the pilot curve.
    pub inflation: f64,
}

/// Empirical `Ψ1`, `Ψ2` from a pilot curve: relative least squares of
/// `V̂_k ≈ p1·V0/k + p2/k^{2/3}` over `k ≥ 1` with non-negative coefficients,
/// then scaled up to an upper envelope of the curve.
pub fn fit_psi_surrogates(curve: &MseCurve, v0: f64) -> Result<PsiFit> {
    let points: Vec<(f64, f64)> = curve
        .checkpoints
        .iter()
        .zip(&curve.lyapunov)
        .filter(|&(&k, &v)| k >= 1 && v > 0.0)
        .map(|(&k, &v)| (k as f64, v))
        .collect();
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!("{} positive pilot points", points.len())));
    }
    let basis = |k: f64| (v0 / k, 1.0 / (k.cbrt() * k.cbrt()));
    let solve = |use1: bool, use2: bool| -> Option<(f64, f64)> {
        let rows: Vec<[f64; 2]> = points
            .iter()
            .map(|&(k, v)| {
                let (f1, f2) = basis(k);
                [if use1 { f1 / v } else { 0.0 }, if use2 { f2 / v } else { 0.0 }]
            })
            .collect();
        let a = Matrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
        let ones = Vector::from_element(rows.len(), 1.0);
        let mut ata = a.transpose() * &a;
        for j in 0..2 {
            if ata[(j, j)] == 0.0 {
                ata[(j, j)] = 1.0;
            }
        }
        let sol = ata.lu().solve(&(a.transpose() * ones))?;
        Some((sol[0], sol[1]))
    };
    let mut coef = solve(true, true).unwrap_or((-1.0, -1.0));
    if coef.0 < 0.0 || coef.1 < 0.0 {
        let only2 = solve(false, true).filter(|c| c.1 > 0.0);
        let only1 = solve(true, false).filter(|c| c.0 > 0.0);
        let err = |c: (f64, f64)| -> f64 {
            points.iter().map(|&(k, v)| {
                let (f1, f2) = basis(k);
                ((c.0 * f1 + c.1 * f2) / v - 1.0).powi(2)
            }).sum()
        };
        coef = match (only1, only2) {
            (Some(a), Some(b)) => if err(a) <= err(b) { a } else { b },
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(Error::InsufficientData("pilot curve admits no non-negative fit".into())),
        };
    }
    let inflation = points
        .iter()
        .map(|&(k, v)| {
            let (f1, f2) = basis(k);
            v / (coef.0 * f1 + coef.1 * f2)
        })
        .fold(1.0_f64, f64::max);
    Ok(PsiFit { psi1: coef.0 * inflation, psi2: coef.1 * inflation, inflation })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(delta0: f64, eps: f64, psi1: f64, psi2: f64) -> RestartConfig {
        RestartConfig::new(delta0, eps, psi1, psi2, PsiSource::Empirical).unwrap()
    }

    #[test]
    fn epoch_counts() {
        assert_eq!(cfg(1.0, 1.0, 1.0, 1.0).epoch_count(), 0);
        assert_eq!(cfg(1.0, 2.0, 1.0, 1.0).epoch_count(), 0);
        assert_eq!(cfg(1.0, 0.125, 1.0, 1.0).epoch_count(), 3);
        assert_eq!(cfg(1.0, 0.5, 1.0, 1.0).epoch_count(), 1);
        assert_eq!(cfg(1.0, 0.1, 1.0, 1.0).epoch_count(), 4);
    }

    #[test]
    fn exact_ceiling_on_integer_powers() {
        assert_eq!(ceil_three_halves(64.0), 512.0);
        assert_eq!(ceil_three_halves(4.0), 8.0);
        assert_eq!(ceil_three_halves(32.0), 182.0);
        assert_eq!(ceil_three_halves(0.0), 0.0);
    }

    #[test]
    fn epoch_cap_is_enforced() {
        let c = cfg(1.0, 1e-6, 1.0, 1.0).with_max_epochs(5);
        assert_eq!(epoch_plan(&c), Err(Error::BudgetExceeded { needed: 20, cap: 5 }));
    }

    #[test]
    fn negative_psi_rejected() {
        assert!(RestartConfig::new(1.0, 0.1, -1.0, 1.0, PsiSource::Empirical).is_err());
    }
}
