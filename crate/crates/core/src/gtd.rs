//! Gradient temporal-difference policy evaluation as a two-time-scale linear
//! system.
//!
//! The chain runs on transitions `ξ = (ζ, ζ′)` of a Markov reward process. For
//! features `φ = φ(ζ)`, `φ′ = φ(ζ′)` and discount `γ`:
//!
//! ```text
//! A11(ξ) = φφᵀ          A12(ξ) = φ(φ − γφ′)ᵀ     b1(ξ) = r(ζ)φ
//! A21(ξ) = (γφ′ − φ)φᵀ  A22(ξ) = 0               b2(ξ) = 0
//! ```
//!
//! `X` is the auxiliary weight vector and `Y` the value-function weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::markov::{FiniteMarkovChain, SampleTable};
use crate::problem::{ExactSolution, ProblemInstance, BLOCK_NORM_BOUND};

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovRewardProcess {
    pub chain: FiniteMarkovChain,
    pub reward: Vector,
    pub discount: f64,
}

impl MarkovRewardProcess {
    pub fn new(chain: FiniteMarkovChain, reward: Vector, discount: f64) -> Result<Self> {
        if reward.len() != chain.n_states() {
            return Err(Error::Dimension(format!("{} rewards for {} states", reward.len(), chain.n_states())));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidInput(format!("discount must lie in [0, 1), got {discount}")));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidInput("non-finite reward".into()));
        }
        Ok(MarkovRewardProcess { chain, reward, discount })
    }

    pub fn n_states(&self) -> usize {
        self.chain.n_states()
    }
}

/// Row `s` of `phi` is the feature vector of state `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub phi: Matrix,
}

impl FeatureMap {
    pub fn new(phi: Matrix) -> Result<Self> {
        if phi.ncols() == 0 || phi.nrows() == 0 {
            return Err(Error::Dimension("feature map must be non-empty".into()));
        }
        if !linalg::all_finite(&phi) {
            return Err(Error::InvalidInput("non-finite feature".into()));
        }
        Ok(FeatureMap { phi })
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn feature(&self, s: usize) -> Vector {
        self.phi.row(s).transpose()
    }

    pub fn scaled(&self, c: f64) -> Self {
        FeatureMap { phi: &self.phi * c }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MrpJson {
    pub transition: Vec<Vec<f64>>,
    pub reward: Vec<f64>,
    pub discount: f64,
    pub features: Vec<Vec<f64>>,
}

pub fn mrp_from_value(raw: MrpJson) -> Result<(MarkovRewardProcess, FeatureMap)> {
    let chain = FiniteMarkovChain::from_rows(&raw.transition)?;
    let mrp = MarkovRewardProcess::new(chain, Vector::from_vec(raw.reward), raw.discount)?;
    let features = FeatureMap::new(linalg::matrix_from_rows(&raw.features, "features")?)?;
    if features.phi.nrows() != mrp.n_states() {
        return Err(Error::Dimension(format!("{} feature rows for {} states", features.phi.nrows(), mrp.n_states())));
    }
    Ok((mrp, features))
}

pub fn mrp_from_json(text: &str) -> Result<(MarkovRewardProcess, FeatureMap)> {
    let raw: MrpJson = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
    mrp_from_value(raw)
}

/// Built instance, pair chain and per-pair table.
#[derive(Debug, Clone, PartialEq)]
pub struct GtdInstance {
    pub problem: ProblemInstance,
    pub chain: FiniteMarkovChain,
    pub table: SampleTable,
    /// `(ζ, ζ′)` of each pair state.
    pub pairs: Vec<(usize, usize)>,
}

fn pair_blocks(mrp: &MarkovRewardProcess, features: &FeatureMap, i: usize, j: usize) -> ProblemInstance {
    let (phi, next) = (features.feature(i), features.feature(j));
    let g = mrp.discount;
    let d = features.dim();
    ProblemInstance {
        a11: &phi * phi.transpose(),
        a12: &phi * (&phi - &next * g).transpose(),
        a21: (&next * g - &phi) * phi.transpose(),
        a22: Matrix::zeros(d, d),
        b1: &phi * mrp.reward[i],
        b2: Vector::zeros(d),
    }
}

fn largest_block_norm(p: &ProblemInstance) -> f64 {
    [&p.a11, &p.a12, &p.a21, &p.a22].into_iter().map(linalg::spectral_norm).fold(0.0, f64::max)
}

fn transitions(mrp: &MarkovRewardProcess) -> Vec<(usize, usize)> {
    let p = mrp.chain.transition();
    let n = mrp.n_states();
    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| p[(i, j)] > 0.0).collect()
}

pub fn build_gtd_instance(mrp: &MarkovRewardProcess, features: &FeatureMap) -> Result<GtdInstance> {
    if features.phi.nrows() != mrp.n_states() {
        return Err(Error::Dimension(format!("{} feature rows for {} states", features.phi.nrows(), mrp.n_states())));
    }
    mrp.chain.check_ergodic()?;
    let pairs = transitions(mrp);
    let p = mrp.chain.transition();

    let states: Vec<ProblemInstance> = pairs.iter().map(|&(i, j)| pair_blocks(mrp, features, i, j)).collect();
    for (s, &(i, j)) in states.iter().zip(&pairs) {
        let norm = largest_block_norm(s);
        if norm > BLOCK_NORM_BOUND {
            return Err(Error::FeatureScale(format!(
                "transition ({i}, {j}) has a block of norm {norm} > {BLOCK_NORM_BOUND}"
            )));
        }
    }

    let m = pairs.len();
    let mut transition = Matrix::zeros(m, m);
    for (a, &(_, j)) in pairs.iter().enumerate() {
        for (b, &(i2, l)) in pairs.iter().enumerate() {
            if i2 == j {
                transition[(a, b)] = p[(j, l)];
            }
        }
    }
    let chain = FiniteMarkovChain::new(transition)?;
    chain.check_ergodic()?;

    let pi = mrp.chain.stationary_distribution()?;
    let weights: Vec<f64> = pairs.iter().map(|&(i, j)| pi[i] * p[(i, j)]).collect();
    let table = SampleTable::new(states)?;
    let problem = table.weighted_mean(&weights)?;
    Ok(GtdInstance { problem, chain, table, pairs })
}

/// Largest `c` such that features `c·φ` satisfy the block norm bound.
pub fn feature_scale_factor(mrp: &MarkovRewardProcess, features: &FeatureMap) -> Result<f64> {
    let worst = transitions(mrp)
        .into_iter()
        .map(|(i, j)| largest_block_norm(&pair_blocks(mrp, features, i, j)))
        .fold(0.0, f64::max);
    if worst == 0.0 {
        return Err(Error::FeatureScale("all feature blocks vanish".into()));
    }
    // blocks are quadratic in φ
    Ok((BLOCK_NORM_BOUND / worst).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellmanSolution {
    pub y_star: Vector,
    /// `φ(ζ)ᵀY*` per state.
    pub values: Vector,
}

/// Solves `E[A12]·Y* = E[b1]` under the stationary distribution.
pub fn bellman_fixed_point(mrp: &MarkovRewardProcess, features: &FeatureMap) -> Result<BellmanSolution> {
    let pi = mrp.chain.stationary_distribution()?;
    let p = mrp.chain.transition();
    let d = features.dim();
    let mut a12 = Matrix::zeros(d, d);
    let mut b1 = Vector::zeros(d);
    for (i, j) in transitions(mrp) {
        let blocks = pair_blocks(mrp, features, i, j);
        let w = pi[i] * p[(i, j)];
        a12 += blocks.a12 * w;
        b1 += blocks.b1 * w;
    }
    let y_star = linalg::solve_vec(&a12, &b1, "E[A12]")?;
    let values = &features.phi * &y_star;
    Ok(BellmanSolution { y_star, values })
}

/// Exact value function `(I − γP)⁻¹r`.
pub fn tabular_values(mrp: &MarkovRewardProcess) -> Result<Vector> {
    let n = mrp.n_states();
    let m = Matrix::identity(n, n) - mrp.chain.transition() * mrp.discount;
    linalg::solve_vec(&m, &mrp.reward, "I - discount P")
}

/// `‖X* − E[A11]⁻¹(E[A21]ᵀY* + E[b1])‖`; NaN when `E[A11]` is singular.
pub fn x_star_tracking_check(p: &ProblemInstance, sol: &ExactSolution) -> f64 {
    let rhs = p.a21.transpose() * &sol.y_star + &p.b1;
    match linalg::solve_vec(&p.a11, &rhs, "A11") {
        Ok(alt) => (&sol.x_star - alt).norm(),
        Err(_) => f64::NAN,
    }
}
