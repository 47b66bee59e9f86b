#![allow(dead_code)]

use proptest::prelude::*;
use ttssa::linalg::{Matrix, Vector};
use ttssa::markov::{FiniteMarkovChain, SampleTable};
use ttssa::problem::ProblemInstance;

pub fn p1() -> ProblemInstance {
    ProblemInstance::scalar(0.25, 0.1, -0.1, 0.25, 0.5, 0.25)
}

pub fn two_state() -> FiniteMarkovChain {
    FiniteMarkovChain::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap()
}

pub fn p1_table(delta: f64) -> SampleTable {
    SampleTable::with_spread(&p1(), &two_state(), delta).unwrap()
}

fn small_matrix(r: usize, c: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, r * c).prop_map(move |v| Matrix::from_vec(r, c, v) * scale)
}

fn small_vector(n: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-1.0f64..1.0, n).prop_map(Vector::from_vec)
}

/// Instances with positive definite symmetric parts of A11 and Δ.
pub fn valid_instance() -> impl Strategy<Value = ProblemInstance> {
    (1usize..4, 1usize..4).prop_flat_map(|(dx, dy)| {
        (
            small_matrix(dx, dx, 0.02),
            small_matrix(dx, dy, 0.05),
            small_matrix(dy, dx, 0.05),
            small_matrix(dy, dy, 0.02),
            small_vector(dx),
            small_vector(dy),
        )
            .prop_map(move |(s1, a12, a21, s2, b1, b2)| {
                let a11 = Matrix::identity(dx, dx) * 0.1 + s1;
                let a11_inv_a12 = a11.clone().lu().solve(&a12).unwrap();
                let a22 = Matrix::identity(dy, dy) * 0.08 + s2 + &a21 * a11_inv_a12;
                ProblemInstance::new(a11, a12, a21, a22, b1, b2).unwrap()
            })
    })
}
