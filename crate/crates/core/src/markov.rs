//! Finite ergodic Markov chains driving the sampled blocks.
//!
//! The chain indexes a [`SampleTable`] of per-state blocks `A_ij(ξ)`, `b_i(ξ)`.
//! Mixing times are computed exactly from powers of the transition matrix
//! applied to the table, not estimated from sample paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::problem::{ProblemInstance, ProblemJson, BLOCK_NORM_BOUND};

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Hard cap on the number of transition-matrix powers a mixing profile evaluates.
const PROFILE_MAX_STEPS: usize = 100_000;

/// Deviations below `PROFILE_FLOOR * max(1, d_0)` are treated as round-off.
const PROFILE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMarkovChain {
    transition: Matrix,
    cumulative: Vec<Vec<f64>>,
}

impl FiniteMarkovChain {
    /// Validates a row-stochastic matrix. Ergodicity is checked separately by
    /// [`FiniteMarkovChain::check_ergodic`] since some callers only sample.
    pub fn new(transition: Matrix) -> Result<Self> {
        let n = transition.nrows();
        if n == 0 || transition.ncols() != n {
            return Err(Error::Dimension(format!("transition matrix is {:?}, expected square and non-empty", transition.shape())));
        }
        for i in 0..n {
            let row = transition.row(i);
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} has a negative or non-finite probability")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidInput(format!("row {i} sums to {sum}")));
            }
        }
        let cumulative = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                transition.row(i).iter().map(|&p| { acc += p; acc }).collect()
            })
            .collect();
        Ok(FiniteMarkovChain { transition, cumulative })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(linalg::matrix_from_rows(rows, "transition")?)
    }

    /// One-state chain; drives a noiseless table.
    pub fn single_state() -> Self {
        Self::new(Matrix::identity(1, 1)).expect("identity is stochastic")
    }

    pub fn n_states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    /// Irreducible and aperiodic iff some power `P^m`, `m ≤ n²`, is entrywise
    /// positive (Wielandt's bound is `(n−1)² + 1`).
    pub fn check_ergodic(&self) -> Result<()> {
        let n = self.n_states();
        let support: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| self.transition[(i, j)] > 0.0).collect()).collect();
        let mut power = support.clone();
        for _ in 0..n * n {
            if power.iter().all(|r| r.iter().all(|&b| b)) {
                return Ok(());
            }
            power = (0..n)
                .map(|i| (0..n).map(|j| (0..n).any(|m| power[i][m] && support[m][j])).collect())
                .collect();
        }
        if power.iter().all(|r| r.iter().all(|&b| b)) {
            return Ok(());
        }
        Err(Error::NotErgodic(format!("no power of the {n}x{n} transition matrix up to {} is positive", n * n)))
    }

    /// Solves `πP = π`, `Σπ = 1` directly.
    pub fn stationary_distribution(&self) -> Result<Vector> {
        self.check_ergodic()?;
        let n = self.n_states();
        let mut system = self.transition.transpose() - Matrix::identity(n, n);
        for j in 0..n {
            system[(n - 1, j)] = 1.0;
        }
        let mut rhs = Vector::zeros(n);
        rhs[n - 1] = 1.0;
        let mut pi = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NotErgodic("stationary system is singular".into()))?;
        pi.iter_mut().for_each(|p| *p = p.max(0.0));
        let total = pi.sum();
        Ok(pi / total)
    }

    /// Inverse-CDF draw of the successor of `state` given `u ∈ [0, 1)`.
    pub fn successor(&self, state: usize, u: f64) -> usize {
        let row = &self.cumulative[state];
        row.iter().position(|&c| u < c).unwrap_or_else(|| {
            // u landed in the round-off gap above the last cumulative value
            row.iter().rposition(|_| true).unwrap()
        })
    }
}

/// Per-state blocks `A_ij(ξ)`, `b_i(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    states: Vec<ProblemInstance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainTableJson {
    pub transition: Vec<Vec<f64>>,
    pub states: Vec<ProblemJson>,
}

impl SampleTable {
    pub fn new(states: Vec<ProblemInstance>) -> Result<Self> {
        let first = states.first().ok_or_else(|| Error::InvalidInput("sample table has no states".into()))?;
        let (dx, dy) = (first.dx(), first.dy());
        if states.iter().any(|s| s.dx() != dx || s.dy() != dy) {
            return Err(Error::Dimension("sample table states have different dimensions".into()));
        }
        Ok(SampleTable { states })
    }

    /// Single state carrying the nominal blocks: the noiseless table.
    pub fn noiseless(nominal: &ProblemInstance) -> Self {
        SampleTable { states: vec![nominal.clone()] }
    }

    pub fn states(&self) -> &[ProblemInstance] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, s: usize) -> &ProblemInstance {
        &self.states[s]
    }

    /// `Σ_s w_s · table[s]` for an arbitrary weight vector.
    pub fn weighted_mean(&self, weights: &[f64]) -> Result<ProblemInstance> {
        if weights.len() != self.states.len() {
            return Err(Error::Dimension(format!("{} weights for {} table states", weights.len(), self.states.len())));
        }
        let first = &self.states[0];
        let mut acc = ProblemInstance::zeros(first.dx(), first.dy());
        for (w, s) in weights.iter().zip(&self.states) {
            acc.a11 += &s.a11 * *w;
            acc.a12 += &s.a12 * *w;
            acc.a21 += &s.a21 * *w;
            acc.a22 += &s.a22 * *w;
            acc.b1 += &s.b1 * *w;
            acc.b2 += &s.b2 * *w;
        }
        Ok(acc)
    }

    pub fn stationary_mean(&self, pi: &Vector) -> Result<ProblemInstance> {
        self.weighted_mean(pi.as_slice())
    }

    /// Builds a table whose stationary mean is exactly `nominal`.
    ///
    /// Each block is perturbed along a fixed unit-norm direction with per-state
    /// weights `w_s` that have zero π-mean and spread `max w − min w = 1`. The
    /// perturbation of a matrix block is `δ·w_s` scaled down where needed so that
    /// every sampled block stays within the 1/4 norm bound; vectors use `δ` as is.
    pub fn with_spread(nominal: &ProblemInstance, chain: &FiniteMarkovChain, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidInput(format!("spread must be finite and non-negative, got {delta}")));
        }
        let n = chain.n_states();
        if n == 1 || delta == 0.0 {
            return Ok(SampleTable { states: vec![nominal.clone(); n] });
        }
        let pi = chain.stationary_distribution()?;
        let weights = spread_weights(&pi);
        let max_w = weights.iter().fold(0.0_f64, |m, w| m.max(w.abs()));

        let unit_matrix = |m: &Matrix| {
            let (r, c) = m.shape();
            Matrix::from_element(r, c, 1.0 / ((r * c) as f64).sqrt())
        };
        let unit_vector = |v: &Vector| Vector::from_element(v.len(), 1.0 / (v.len() as f64).sqrt());
        let matrix_scale = |m: &Matrix| {
            let room = (BLOCK_NORM_BOUND - linalg::spectral_norm(m)).max(0.0);
            delta.min(room / max_w)
        };

        let dirs = (
            unit_matrix(&nominal.a11) * matrix_scale(&nominal.a11),
            unit_matrix(&nominal.a12) * matrix_scale(&nominal.a12),
            unit_matrix(&nominal.a21) * matrix_scale(&nominal.a21),
            unit_matrix(&nominal.a22) * matrix_scale(&nominal.a22),
            unit_vector(&nominal.b1) * delta,
            unit_vector(&nominal.b2) * delta,
        );
        let states = weights
            .iter()
            .map(|&w| ProblemInstance {
                a11: &nominal.a11 + &dirs.0 * w,
                a12: &nominal.a12 + &dirs.1 * w,
                a21: &nominal.a21 + &dirs.2 * w,
                a22: &nominal.a22 + &dirs.3 * w,
                b1: &nominal.b1 + &dirs.4 * w,
                b2: &nominal.b2 + &dirs.5 * w,
            })
            .collect();
        Ok(SampleTable { states })
    }

    pub fn to_json_value(&self, chain: &FiniteMarkovChain) -> ChainTableJson {
        ChainTableJson {
            transition: linalg::matrix_to_rows(chain.transition()),
            states: self.states.iter().map(ProblemInstance::to_json_value).collect(),
        }
    }
}

/// Zero π-mean weights with unit spread built from the alternating pattern
/// `(+1, −1, +1, …)`.
fn spread_weights(pi: &Vector) -> Vec<f64> {
    let pattern: Vec<f64> = (0..pi.len()).map(|s| if s % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mean: f64 = pattern.iter().zip(pi.iter()).map(|(v, p)| v * p).sum();
    let centered: Vec<f64> = pattern.iter().map(|v| v - mean).collect();
    let hi = centered.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = centered.iter().copied().fold(f64::INFINITY, f64::min);
    centered.iter().map(|v| v / (hi - lo)).collect()
}

/// Parses `{"transition": [[...]], "states": [{...}, ...]}`.
pub fn chain_table_from_json(text: &str) -> Result<(FiniteMarkovChain, SampleTable)> {
    let raw: ChainTableJson = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
    chain_table_from_value(raw)
}

pub fn chain_table_from_value(raw: ChainTableJson) -> Result<(FiniteMarkovChain, SampleTable)> {
    let chain = FiniteMarkovChain::from_rows(&raw.transition)?;
    let states = raw.states.into_iter().map(ProblemInstance::from_json_value).collect::<Result<Vec<_>>>()?;
    let table = SampleTable::new(states)?;
    if table.n_states() != chain.n_states() {
        return Err(Error::Dimension(format!("{} table states for a {}-state chain", table.n_states(), chain.n_states())));
    }
    Ok((chain, table))
}

/// Exact mixing behaviour of a chain with respect to a table.
///
/// `deviations[k]` is the largest, over start states and the six blocks, norm of
/// `E[block(ξ_k) | ξ_0 = s] − stationary mean`. The mixing time `τ(α)` is the
/// first `k` after which every deviation stays within `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingProfile {
    deviations: Vec<f64>,
    suffix_max: Vec<f64>,
    /// `max_s TV(P^k(s, ·), π)`.
    tv_decay: Vec<f64>,
    floor: f64,
    /// Geometric decay rate used to extend `τ` below the round-off floor.
    tail_rate: f64,
    c_geometric: f64,
}

impl MixingProfile {
    pub fn compute(chain: &FiniteMarkovChain, table: &SampleTable) -> Result<Self> {
        if table.n_states() != chain.n_states() {
            return Err(Error::Dimension(format!("{} table states for a {}-state chain", table.n_states(), chain.n_states())));
        }
        let pi = chain.stationary_distribution()?;
        let n = chain.n_states();
        let mean = table.stationary_mean(&pi)?;

        // Centred blocks: the deviation at step k from start s is Σ_j P^k[s,j]·centred_j,
        // since Σ_j π_j·centred_j = 0.
        let centred: Vec<ProblemInstance> = table
            .states()
            .iter()
            .map(|b| ProblemInstance {
                a11: &b.a11 - &mean.a11,
                a12: &b.a12 - &mean.a12,
                a21: &b.a21 - &mean.a21,
                a22: &b.a22 - &mean.a22,
                b1: &b.b1 - &mean.b1,
                b2: &b.b2 - &mean.b2,
            })
            .collect();

        let deviation_at = |power: &Matrix| -> f64 {
            (0..n)
                .map(|s| {
                    let row: Vec<f64> = (0..n).map(|j| power[(s, j)] - pi[j]).collect();
                    let m = table_combination(&centred, &row);
                    [&m.a11, &m.a12, &m.a21, &m.a22]
                        .into_iter()
                        .map(linalg::spectral_norm)
                        .fold(m.b1.norm().max(m.b2.norm()), f64::max)
                })
                .fold(0.0, f64::max)
        };
        let tv_at = |power: &Matrix| -> f64 {
            (0..n)
                .map(|s| 0.5 * (0..n).map(|j| (power[(s, j)] - pi[j]).abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };

        let mut power = Matrix::identity(n, n);
        let mut deviations = vec![deviation_at(&power)];
        let mut tv_decay = vec![tv_at(&power)];
        let floor = PROFILE_FLOOR * deviations[0].max(1.0);
        while deviations.len() < PROFILE_MAX_STEPS && *deviations.last().unwrap() > floor {
            power = &power * chain.transition();
            deviations.push(deviation_at(&power));
            tv_decay.push(tv_at(&power));
        }

        let mut suffix_max = deviations.clone();
        for k in (0..suffix_max.len().saturating_sub(1)).rev() {
            suffix_max[k] = suffix_max[k].max(suffix_max[k + 1]);
        }
        let tail_rate = tail_rate(&deviations, floor);

        let mut profile = MixingProfile { deviations, suffix_max, tv_decay, floor, tail_rate, c_geometric: 0.0 };
        profile.c_geometric = fit_geometric_constant(&profile.default_samples()).map(|f| f.c).unwrap_or(0.0);
        Ok(profile)
    }

    /// `τ(α)`: first `k` with every later deviation within `α`.
    pub fn tau(&self, alpha: f64) -> u64 {
        if alpha >= self.suffix_max[0] {
            return 0;
        }
        let last = self.deviations.len() - 1;
        if alpha >= self.floor || self.suffix_max[last] > self.floor {
            // suffix_max is nonincreasing; beyond `last` deviations are below the floor
            let k = self.suffix_max.partition_point(|&d| d > alpha);
            return k.min(last + usize::from(self.suffix_max[last] > alpha)) as u64;
        }
        let base = self.suffix_max.partition_point(|&d| d > self.floor) as u64;
        if self.tail_rate <= 0.0 {
            return base;
        }
        let extra = ((self.floor / alpha).ln() / (1.0 / self.tail_rate).ln()).ceil();
        base + extra.max(0.0) as u64
    }

    pub fn deviations(&self) -> &[f64] {
        &self.deviations
    }

    pub fn tv_decay(&self) -> &[f64] {
        &self.tv_decay
    }

    /// Fitted `C` of `τ(α) ≈ C·log(1/α)` over the default tolerance grid.
    pub fn c_geometric(&self) -> f64 {
        self.c_geometric
    }

    /// `(α, τ(α))` on a grid from just below `d_0` down four decades.
    pub fn default_samples(&self) -> Vec<(f64, f64)> {
        let d0 = self.suffix_max[0];
        if d0 <= 0.0 {
            return Vec::new();
        }
        (1..=20).map(|i| d0 * 10f64.powf(-(i as f64) / 5.0)).map(|a| (a, self.tau(a) as f64)).collect()
    }

    /// Upper envelope `τ(α) ≤ slope·ln(1/α) + offset` valid on the default grid
    /// and, through the geometric tail, below it.
    pub fn tau_envelope(&self) -> (f64, f64) {
        let slope = if self.tail_rate > 0.0 { 1.0 / (1.0 / self.tail_rate).ln() } else { 0.0 };
        let samples = self.default_samples();
        let offset = samples
            .iter()
            .map(|&(a, t)| t - slope * (1.0 / a).ln())
            .fold(0.0_f64, f64::max);
        (slope, offset + 1.0)
    }
}

fn table_combination(states: &[ProblemInstance], weights: &[f64]) -> ProblemInstance {
    let first = &states[0];
    let mut acc = ProblemInstance::zeros(first.dx(), first.dy());
    for (w, s) in weights.iter().zip(states) {
        acc.a11 += &s.a11 * *w;
        acc.a12 += &s.a12 * *w;
        acc.a21 += &s.a21 * *w;
        acc.a22 += &s.a22 * *w;
        acc.b1 += &s.b1 * *w;
        acc.b2 += &s.b2 * *w;
    }
    acc
}

/// Per-step decay factor of the deviation sequence near its end; zero when the
/// chain reaches stationarity exactly.
fn tail_rate(deviations: &[f64], floor: f64) -> f64 {
    let last = deviations.len() - 1;
    if last == 0 {
        return 0.0;
    }
    let start = deviations[..last].iter().rposition(|&d| d > 100.0 * floor).unwrap_or(0);
    let (d_start, d_last) = (deviations[start], deviations[last]);
    if start == last || d_start <= 0.0 || d_last <= 0.0 {
        return 0.0;
    }
    let rate = (d_last / d_start).powf(1.0 / (last - start) as f64);
    if rate < 1e-6 {
        0.0
    } else {
        rate.min(1.0 - 1e-12)
    }
}

/// Computes `τ(α)` exactly from powers of the transition matrix.
pub fn mixing_time(chain: &FiniteMarkovChain, table: &SampleTable, alpha: f64) -> Result<u64> {
    Ok(MixingProfile::compute(chain, table)?.tau(alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricFit {
    /// Least-squares slope of `τ` against `ln(1/α)`.
    pub c: f64,
    pub intercept: f64,
    /// RMS departure from the pure law `C·ln(1/α)`, relative to the mean `τ`.
    pub relative_residual: f64,
}

/// Fits `τ(α) ≈ C·ln(1/α)` from `(α, τ)` pairs.
pub fn fit_geometric_constant(samples: &[(f64, f64)]) -> Result<GeometricFit> {
    if samples.len() < 5 {
        return Err(Error::InsufficientData(format!("{} (alpha, tau) pairs, need at least 5", samples.len())));
    }
    if samples.iter().any(|&(a, t)| !(a > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput("tolerances must be positive and mixing times finite".into()));
    }
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InsufficientData(format!("tolerances span {:.3} decades, need 2", (hi / lo).log10())));
    }
    let xs: Vec<f64> = samples.iter().map(|s| (1.0 / s.0).ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let line = crate::fit::least_squares_line(&xs, &ys)?;
    let mean_tau = ys.iter().sum::<f64>() / ys.len() as f64;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - line.slope * x).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    let relative_residual = if mean_tau > 0.0 { rms / mean_tau } else { rms };
    Ok(GeometricFit { c: line.slope, intercept: line.intercept, relative_residual })
}

/// Where a trajectory's chain starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StartState {
    /// Drawn from the stationary distribution with the stream's generator.
    #[default]
    Stationary,
    Fixed(usize),
}

/// Substream seed of trajectory `index`: `splitmix64(splitmix64(base) ^ index)`.
///
/// The generator of each stream is `ChaCha8Rng::seed_from_u64(seed)`.
pub fn substream_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Single-owner sample path over a chain and its table.
#[derive(Debug, Clone)]
pub struct SampleStream<'a> {
    chain: &'a FiniteMarkovChain,
    table: &'a SampleTable,
    state: usize,
    rng: ChaCha8Rng,
    k: u64,
}

impl<'a> SampleStream<'a> {
    pub fn new(chain: &'a FiniteMarkovChain, table: &'a SampleTable, seed: u64, start: StartState) -> Result<Self> {
        if table.n_states() != chain.n_states() {
            return Err(Error::Dimension(format!("{} table states for a {}-state chain", table.n_states(), chain.n_states())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = match start {
            StartState::Fixed(s) if s < chain.n_states() => s,
            StartState::Fixed(s) => return Err(Error::InvalidInput(format!("start state {s} out of range"))),
            StartState::Stationary if chain.n_states() == 1 => 0,
            StartState::Stationary => {
                let pi = chain.stationary_distribution()?;
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                pi.iter().position(|&p| { acc += p; u < acc }).unwrap_or(chain.n_states() - 1)
            }
        };
        Ok(SampleStream { chain, table, state, rng, k: 0 })
    }

    /// Advances the chain one step and returns the new state with its blocks.
    pub fn next_sample(&mut self) -> (usize, &'a ProblemInstance) {
        let u: f64 = self.rng.gen();
        self.state = self.chain.successor(self.state, u);
        self.k += 1;
        (self.state, self.table.state(self.state))
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn steps(&self) -> u64 {
        self.k
    }
}
