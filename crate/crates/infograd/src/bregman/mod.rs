//! Bregman divergences, scalar and matrix-valued.
//!
//! The scalar half is classical: a strictly convex generator `F` on an
//! interval induces `d(x, y) = F(x) - F(y) - F'(y)(x - y)`, and the
//! Legendre transform swaps arguments, `d_F(x, y) = d_{F*}(F'(y), F'(x))`.
//!
//! The matrix half generalizes the value of the generator from a number
//! to a matrix: `F` maps an input vector to a `p x q` matrix, its Frechet
//! derivative at `y` is a linear map from input increments to matrices,
//! and the divergence
//!
//! ```text
//! D(x, y) = F(x) - F(y) - DF(y)[x - y]
//! ```
//!
//! is itself a `p x q` matrix, compared against zero in a cone order
//! (entrywise or positive-semidefinite). Convexity in a cone order is a
//! property some generators have and some measurably lack; sweeps in
//! [`properties`] report violations as data rather than treating them as
//! errors, because for the counting-channel generator the violations are
//! genuine and the gradient identity in [`equivalence`] holds anyway.

mod equivalence;
mod matrix;
mod properties;
mod scalar;

pub use equivalence::{
    gaussian_equivalence_mc, poisson_phi_gradient_via_divergence, GaussianDualCheck,
};
pub use matrix::{
    gaussian_generator, linear_combination, matrix_divergence, outer_square_generator,
    poisson_generator, stacked_scalar, uniform_squared_norm, ConeOrder, MatrixGenerator,
};
pub use properties::{
    check_properties, expected_divergence, minimizer_margins, outcome_space_poisson,
    recover_unconditional_minimizer, MinimizerCheck, OutcomeSpace, PropertyReport,
    PropertyViolation,
};
pub use scalar::{
    conjugate, scalar_divergence, scaled_count, scaled_square, squared, xlogx, xlogx_minus_x,
    neg_log, ScalarGenerator,
};
