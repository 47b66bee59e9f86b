//! The coupled linear system
//!
//! ```text
//! A11 X + A12 Y = b1
//! A21 X + A22 Y = b2
//! ```
//!
//! its exact solution through the reduced (Schur complement) matrix
//! `Δ = A22 − A21 A11⁻¹ A12`, the spectral quantities the rate constants are
//! built from, and the checks on boundedness and positivity of the blocks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::markov::{FiniteMarkovChain, SampleTable};

/// Largest admissible spectral norm of any sampled matrix block.
pub const BLOCK_NORM_BOUND: f64 = 0.25;

/// Tolerance for "stationary mean of the table equals the nominal blocks".
pub const MEAN_TOLERANCE: f64 = 1e-10;

/// The four matrices and two vectors of the linear system. Sample tables reuse
/// this type for their per-state blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub a11: Matrix,
    pub a12: Matrix,
    pub a21: Matrix,
    pub a22: Matrix,
    pub b1: Vector,
    pub b2: Vector,
}

/// JSON layout: row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemJson {
    pub a11: Vec<Vec<f64>>,
    pub a12: Vec<Vec<f64>>,
    pub a21: Vec<Vec<f64>>,
    pub a22: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ProblemInstance {
    pub fn new(a11: Matrix, a12: Matrix, a21: Matrix, a22: Matrix, b1: Vector, b2: Vector) -> Result<Self> {
        let p = ProblemInstance { a11, a12, a21, a22, b1, b2 };
        p.check_shape()?;
        Ok(p)
    }

    /// Scalar system (dx = dy = 1).
    pub fn scalar(a11: f64, a12: f64, a21: f64, a22: f64, b1: f64, b2: f64) -> Self {
        let m = |v| Matrix::from_element(1, 1, v);
        let v = |v| Vector::from_element(1, v);
        ProblemInstance { a11: m(a11), a12: m(a12), a21: m(a21), a22: m(a22), b1: v(b1), b2: v(b2) }
    }

    pub fn zeros(dx: usize, dy: usize) -> Self {
        ProblemInstance {
            a11: Matrix::zeros(dx, dx),
            a12: Matrix::zeros(dx, dy),
            a21: Matrix::zeros(dy, dx),
            a22: Matrix::zeros(dy, dy),
            b1: Vector::zeros(dx),
            b2: Vector::zeros(dy),
        }
    }

    pub fn dx(&self) -> usize {
        self.a11.nrows()
    }

    pub fn dy(&self) -> usize {
        self.a22.nrows()
    }

    fn check_shape(&self) -> Result<()> {
        let (dx, dy) = (self.a11.nrows(), self.a22.nrows());
        let shapes = [
            ("a11", self.a11.shape(), (dx, dx)),
            ("a12", self.a12.shape(), (dx, dy)),
            ("a21", self.a21.shape(), (dy, dx)),
            ("a22", self.a22.shape(), (dy, dy)),
            ("b1", (self.b1.len(), 1), (dx, 1)),
            ("b2", (self.b2.len(), 1), (dy, 1)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Dimension(format!("`{name}` is {got:?}, expected {want:?}")));
            }
        }
        if dx == 0 || dy == 0 {
            return Err(Error::Dimension("dx and dy must be positive".into()));
        }
        let finite = [&self.a11, &self.a12, &self.a21, &self.a22].into_iter().all(linalg::all_finite)
            && self.b1.iter().chain(self.b2.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite entry in problem instance".into()));
        }
        Ok(())
    }

    pub fn from_json_value(raw: ProblemJson) -> Result<Self> {
        ProblemInstance::new(
            linalg::matrix_from_rows(&raw.a11, "a11")?,
            linalg::matrix_from_rows(&raw.a12, "a12")?,
            linalg::matrix_from_rows(&raw.a21, "a21")?,
            linalg::matrix_from_rows(&raw.a22, "a22")?,
            Vector::from_vec(raw.b1),
            Vector::from_vec(raw.b2),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ProblemJson = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::from_json_value(raw)
    }

    pub fn to_json_value(&self) -> ProblemJson {
        ProblemJson {
            a11: linalg::matrix_to_rows(&self.a11),
            a12: linalg::matrix_to_rows(&self.a12),
            a21: linalg::matrix_to_rows(&self.a21),
            a22: linalg::matrix_to_rows(&self.a22),
            b1: self.b1.iter().copied().collect(),
            b2: self.b2.iter().copied().collect(),
        }
    }

    /// Largest spectral norm over the four matrix blocks.
    pub fn max_matrix_norm(&self) -> f64 {
        [&self.a11, &self.a12, &self.a21, &self.a22]
            .into_iter()
            .map(linalg::spectral_norm)
            .fold(0.0, f64::max)
    }

    pub fn max_vector_norm(&self) -> f64 {
        self.b1.norm().max(self.b2.norm())
    }

    /// Residual norm of `(x, y)` in the linear system.
    pub fn residual_norm(&self, x: &Vector, y: &Vector) -> f64 {
        let r1 = &self.a11 * x + &self.a12 * y - &self.b1;
        let r2 = &self.a21 * x + &self.a22 * y - &self.b2;
        (r1.norm_squared() + r2.norm_squared()).sqrt()
    }

    /// Euclidean norm of the stacked right-hand side.
    pub fn rhs_norm(&self) -> f64 {
        (self.b1.norm_squared() + self.b2.norm_squared()).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub x_star: Vector,
    pub y_star: Vector,
}

/// `Δ = A22 − A21 A11⁻¹ A12`.
pub fn reduced_matrix(p: &ProblemInstance) -> Result<Matrix> {
    let a11_inv_a12 = linalg::solve(&p.a11, &p.a12, "A11")?;
    Ok(&p.a22 - &p.a21 * a11_inv_a12)
}

/// Solves the system through the reduced matrix:
/// `Y* = Δ⁻¹(b2 − A21 A11⁻¹ b1)`, `X* = A11⁻¹(b1 − A12 Y*)`.
pub fn exact_solution(p: &ProblemInstance) -> Result<ExactSolution> {
    let delta = reduced_matrix(p)?;
    check_reduced(p, &delta)?;
    let a11_inv_b1 = linalg::solve_vec(&p.a11, &p.b1, "A11")?;
    let y_star = linalg::solve_vec(&delta, &(&p.b2 - &p.a21 * a11_inv_b1), "Delta")?;
    let x_star = linalg::solve_vec(&p.a11, &(&p.b1 - &p.a12 * &y_star), "A11")?;
    Ok(ExactSolution { x_star, y_star })
}

/// Besides its own condition number, `Δ` is singular when its smallest singular
/// value is round-off relative to the terms it was formed from.
fn check_reduced(p: &ProblemInstance, delta: &Matrix) -> Result<()> {
    linalg::check_invertible(delta, "Delta")?;
    let a11_inv_a12 = linalg::solve(&p.a11, &p.a12, "A11")?;
    let scale = linalg::spectral_norm(&p.a22) + linalg::spectral_norm(&p.a21) * linalg::spectral_norm(&a11_inv_a12);
    let smallest = linalg::singular_values(delta).first().copied().unwrap_or(0.0);
    let condition = scale / smallest;
    if !condition.is_finite() || condition > linalg::SINGULAR_CONDITION {
        return Err(Error::SingularMatrix { what: "Delta", condition });
    }
    Ok(())
}

/// Spectral quantities entering the rate constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Smallest eigenvalue of the symmetric part of A11.
    pub gamma: f64,
    /// Smallest eigenvalue of the symmetric part of Δ.
    pub rho: f64,
    /// Smallest / largest singular value of A11.
    pub lambda1: f64,
    pub lambdan: f64,
    /// Smallest / largest singular value of Δ.
    pub sigma1: f64,
    pub sigman: f64,
    /// Bound on the sampled vectors, `max_ξ max_i ‖b_i(ξ)‖`.
    pub b_bound: f64,
    pub y_star_norm: f64,
}

pub fn spectral_summary(p: &ProblemInstance, table: &SampleTable) -> Result<SpectralSummary> {
    let delta = reduced_matrix(p)?;
    let gamma = linalg::min_sym_eigenvalue(&p.a11);
    if gamma <= 0.0 {
        return Err(Error::NotPositive { what: "A11", min_eigenvalue: gamma });
    }
    let rho = linalg::min_sym_eigenvalue(&delta);
    if rho <= 0.0 {
        return Err(Error::NotPositive { what: "Delta", min_eigenvalue: rho });
    }
    let sv_a = linalg::singular_values(&p.a11);
    let sv_d = linalg::singular_values(&delta);
    let sol = exact_solution(p)?;
    let b_bound = table.states().iter().map(ProblemInstance::max_vector_norm).fold(0.0, f64::max);
    Ok(SpectralSummary {
        gamma,
        rho,
        lambda1: sv_a[0],
        lambdan: sv_a[sv_a.len() - 1],
        sigma1: sv_d[0],
        sigman: sv_d[sv_d.len() - 1],
        b_bound,
        y_star_norm: sol.y_star.norm(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Every sampled block within the 1/4 bound and every sampled vector within B.
    pub bounded_ok: bool,
    pub worst_matrix_norm: f64,
    pub worst_vector_norm: f64,
    /// The B the vectors were checked against.
    pub b_bound: f64,
    pub a11_positive: bool,
    pub delta_positive: bool,
    /// Both symmetric parts positive definite.
    pub positivity_ok: bool,
    /// Stationary-weighted table means reproduce the nominal blocks.
    pub stationary_mean_ok: bool,
    pub details: Vec<String>,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.bounded_ok && self.positivity_ok && self.stationary_mean_ok
    }
}

/// Checks boundedness of the sampled blocks, positivity of A11 and Δ and the
/// stationary-mean identity. Violations are collected, never returned as errors.
/// Without `declared_b` the vectors are checked against their own maximum,
/// which always passes.
pub fn validate_assumptions(
    p: &ProblemInstance,
    chain: &FiniteMarkovChain,
    table: &SampleTable,
    declared_b: Option<f64>,
) -> AssumptionReport {
    let mut details = Vec::new();

    let mut worst_matrix_norm: f64 = 0.0;
    let mut worst_vector_norm: f64 = 0.0;
    for (s, blocks) in table.states().iter().enumerate() {
        for (name, m) in [("A11", &blocks.a11), ("A12", &blocks.a12), ("A21", &blocks.a21), ("A22", &blocks.a22)] {
            let n = linalg::spectral_norm(m);
            worst_matrix_norm = worst_matrix_norm.max(n);
            if n > BLOCK_NORM_BOUND {
                details.push(format!("state {s}: ||{name}|| = {n} exceeds 1/4"));
            }
        }
        worst_vector_norm = worst_vector_norm.max(blocks.max_vector_norm());
    }
    let b_bound = declared_b.unwrap_or(worst_vector_norm);
    if worst_vector_norm > b_bound {
        details.push(format!("max ||b_i(xi)|| = {worst_vector_norm} exceeds declared B = {b_bound}"));
    }
    let bounded_ok = worst_matrix_norm <= BLOCK_NORM_BOUND && worst_vector_norm <= b_bound;

    let a11_min = linalg::min_sym_eigenvalue(&p.a11);
    let a11_positive = a11_min > 0.0;
    if !a11_positive {
        details.push(format!("symmetric part of A11 has eigenvalue {a11_min} <= 0"));
    }
    let delta_positive = match reduced_matrix(p) {
        Ok(delta) => {
            let d_min = linalg::min_sym_eigenvalue(&delta);
            if d_min <= 0.0 {
                details.push(format!("symmetric part of Delta has eigenvalue {d_min} <= 0"));
            }
            d_min > 0.0
        }
        Err(e) => {
            details.push(format!("Delta unavailable: {e}"));
            false
        }
    };
    if a11_positive != delta_positive {
        details.push("only one of A11, Delta is positive; the weaker max-form condition holds but the analysis needs both".into());
    }

    let stationary_mean_ok = match chain.stationary_distribution() {
        Ok(pi) => match table.stationary_mean(&pi) {
            Ok(mean) => {
                let dev = max_block_deviation(&mean, p);
                if dev > MEAN_TOLERANCE {
                    details.push(format!("stationary mean of table deviates from nominal blocks by {dev:e}"));
                }
                dev <= MEAN_TOLERANCE
            }
            Err(e) => {
                details.push(format!("stationary mean unavailable: {e}"));
                false
            }
        },
        Err(e) => {
            details.push(format!("stationary distribution unavailable: {e}"));
            false
        }
    };

    AssumptionReport {
        bounded_ok,
        worst_matrix_norm,
        worst_vector_norm,
        b_bound,
        a11_positive,
        delta_positive,
        positivity_ok: a11_positive && delta_positive,
        stationary_mean_ok,
        details,
    }
}

/// Largest entrywise absolute difference across all six blocks.
pub fn max_block_deviation(a: &ProblemInstance, b: &ProblemInstance) -> f64 {
    if a.a11.shape() != b.a11.shape() || a.a22.shape() != b.a22.shape() {
        return f64::INFINITY;
    }
    let m = |x: &Matrix, y: &Matrix| (x - y).amax();
    let v = |x: &Vector, y: &Vector| (x - y).amax();
    m(&a.a11, &b.a11)
        .max(m(&a.a12, &b.a12))
        .max(m(&a.a21, &b.a21))
        .max(m(&a.a22, &b.a22))
        .max(v(&a.b1, &b.b1))
        .max(v(&a.b2, &b.b2))
}
