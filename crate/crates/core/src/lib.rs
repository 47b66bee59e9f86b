//! Linear two-time-scale stochastic approximation under Markovian noise.
//!
//! The iteration
//!
//! ```text
//! X_{k+1} = X_k − α_k (A11(ξ_k) X_k + A12(ξ_k) Y_k − b1(ξ_k))
//! Y_{k+1} = Y_k − β_k (A21(ξ_k) X_k + A22(ξ_k) Y_k − b2(ξ_k))
//! ```
//!
//! is driven by a finite ergodic chain `ξ_k`. The crate provides the exact
//! solution and spectral data of the mean system, certified step-size
//! schedules, seeded Monte Carlo error curves, the closed-form rate constants,
//! a restarted variant and an adapter for gradient TD learning.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod problem;
pub mod markov;
pub mod schedule;
pub mod extended;
pub mod engine;
pub mod constants;
pub mod restart;
pub mod gtd;
pub mod fit;

pub use error::{Error, Result};
