//! Reference-point effects at an elimination cutoff: an all-pay contest model
//! with expectation-based loss aversion, a ski-jumping tournament simulator
//! with the prequalification rule change, and a regression-discontinuity
//! toolkit (local randomization, local polynomial, difference in
//! discontinuities, falsification tests).

// Negated float comparisons are used on purpose so that NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod contest;
pub mod data;
pub mod linalg;
pub mod rd;
pub mod rng;
pub mod scalar;
pub mod simulator;
pub mod stats;
pub mod table;
pub mod validation;

pub use scalar::Scalar;

pub type ContestParams = contest::ContestParams<f64>;
pub type EquilibriumSolution = contest::EquilibriumSolution<f64>;
pub type WlsFit = linalg::WlsFit<f64>;
pub type Matrix = linalg::Matrix<f64>;
