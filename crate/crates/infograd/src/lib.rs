//! Mutual information and its gradients for Poisson and Gaussian channels
//! with finite-support inputs, together with the matrix-valued Bregman
//! divergences that those gradients turn out to equal.
//!
//! The crate is organised around one rule: every quantity is computable by
//! at least two independent routes. Exact grid enumeration backs Monte
//! Carlo estimates, closed-form gradients are checked against finite
//! differences of the information itself, and divergence identities are
//! verified per sample. The [`verify`] module packages those cross-checks
//! into a runnable suite.
//!
//! Modules:
//!
//! * [`numerics`]: dense matrices, compensated summation, seeded RNG
//!   streams, finite differences, CSV text format.
//! * [`input_model`]: finite-support input distributions.
//! * [`channels`]: Poisson and Gaussian channel models and the truncated
//!   output grid.
//! * [`inference`]: posteriors, conditional means, conditional rates, and
//!   the MMSE matrix.
//! * [`information`]: mutual information by enumeration, quadrature, and
//!   Monte Carlo.
//! * [`gradients`]: information gradients with respect to the scaling
//!   matrix and dark current.
//! * [`bregman`]: classical and matrix-valued Bregman divergences, cone
//!   orders, duality, and minimizer checks.
//! * [`design`]: projected-gradient design of the scaling matrix.
//! * [`demo`]: small reference instances used throughout the tests.
//! * [`verify`]: the executable cross-check suite.

pub mod bregman;
pub mod channels;
pub mod demo;
pub mod design;
pub mod error;
pub mod gradients;
pub mod inference;
pub mod information;
pub mod input_model;
pub mod numerics;
pub mod verify;

pub use error::{Error, Result};
