//! Dense helpers on top of `nalgebra` shared by the other modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition-number threshold above which a matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values sorted ascending.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    sv
}

/// Spectral (operator 2-) norm.
pub fn spectral_norm(m: &Matrix) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn condition_number(m: &Matrix) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Smallest eigenvalue of `(M + Mᵀ)/2`.
pub fn min_sym_eigenvalue(m: &Matrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Solves `m · x = rhs`, refusing matrices whose condition estimate exceeds
/// [`SINGULAR_CONDITION`].
pub fn solve(m: &Matrix, rhs: &Matrix, what: &'static str) -> Result<Matrix> {
    check_invertible(m, what)?;
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(Error::SingularMatrix { what, condition: f64::INFINITY })
}

pub fn solve_vec(m: &Matrix, rhs: &Vector, what: &'static str) -> Result<Vector> {
    check_invertible(m, what)?;
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(Error::SingularMatrix { what, condition: f64::INFINITY })
}

pub fn check_invertible(m: &Matrix, what: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("`{what}` is {}x{}, expected square", m.nrows(), m.ncols())));
    }
    let condition = condition_number(m);
    if !condition.is_finite() || condition > SINGULAR_CONDITION {
        return Err(Error::SingularMatrix { what, condition });
    }
    Ok(())
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Builds a matrix from row-major nested rows. An empty outer list is a 0x0 matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("`{what}` has ragged rows")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Pairwise (cascade) summation with a fixed split order, so the result depends
/// only on the input order and not on how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_part_drops_skew_component() {
        let m = Matrix::from_row_slice(2, 2, &[0.2, 0.1, -0.1, 0.2]);
        assert!((min_sym_eigenvalue(&m) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(solve_vec(&m, &Vector::from_vec(vec![1.0, 1.0]), "m"), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }
}
