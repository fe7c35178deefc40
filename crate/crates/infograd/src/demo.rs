//! Small reference instances shared by the test suite, the verification
//! suite, and the CLI documentation.
//!
//! Sizes are deliberately tiny so that exact enumeration is instant and
//! every estimator in the crate can be compared against it.

use crate::channels::{GaussianChannel, PoissonChannel};
use crate::design::{Constraint, DesignMi, DesignOptions, DesignProblem};
use crate::information::DEFAULT_CELL_CAP;
use crate::input_model::FiniteDistribution;
use crate::numerics::Matrix;

/// Scalar Poisson instance: X ∈ {1, 3} equiprobable, scaling 1, dark
/// current 0.5.
pub fn scalar_binary() -> (PoissonChannel, FiniteDistribution) {
    let ch = PoissonChannel::new(Matrix::new(1, 1, vec![1.0]).unwrap(), vec![0.5])
        .expect("valid channel");
    let d = FiniteDistribution::new(vec![vec![1.0], vec![3.0]], vec![0.5, 0.5])
        .expect("valid distribution");
    (ch, d)
}

/// Two-input two-output Poisson instance: atoms (1,0), (0,1), (1,1) with
/// probabilities 0.4, 0.4, 0.2; Φ = [[1, 0.5], [0.2, 1]]; dark (0.1, 0.1).
pub fn two_by_two() -> (PoissonChannel, FiniteDistribution) {
    let phi = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0]]).unwrap();
    let ch = PoissonChannel::new(phi, vec![0.1, 0.1]).expect("valid channel");
    let d = FiniteDistribution::new(
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        vec![0.4, 0.4, 0.2],
    )
    .expect("valid distribution");
    (ch, d)
}

/// Gaussian variant of [`two_by_two`]: same Φ and input distribution,
/// identity noise instead of Poisson counting.
pub fn two_by_two_gaussian() -> (GaussianChannel, FiniteDistribution) {
    let phi = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0]]).unwrap();
    let ch = GaussianChannel::new(phi).expect("valid channel");
    let d = two_by_two().1;
    (ch, d)
}

/// Document-style design instance: a 10-word vocabulary, four topic
/// profiles as word-intensity atoms, and three count measurements to
/// allocate. Each measurement row lives in the unit box, the continuous
/// relaxation of choosing a subset of words to pool into one detector.
///
/// The starting matrix is seeded white noise, which blends all topics
/// into every detector and leaves plenty of information on the table for
/// the ascent to recover.
pub fn topic_design() -> (DesignProblem, DesignOptions) {
    let atoms = vec![
        vec![2.0, 1.5, 1.0, 0.2, 0.1, 0.0, 0.0, 0.1, 0.2, 0.4],
        vec![0.1, 0.2, 0.3, 2.0, 1.6, 0.8, 0.1, 0.0, 0.2, 0.3],
        vec![0.0, 0.1, 0.2, 0.1, 0.3, 0.9, 1.8, 1.4, 0.5, 0.2],
        vec![0.6, 0.5, 0.4, 0.5, 0.4, 0.5, 0.4, 0.5, 1.2, 1.0],
    ];
    let probs = vec![0.3, 0.3, 0.25, 0.15];
    let prior = FiniteDistribution::new(atoms, probs).expect("valid distribution");
    let problem = DesignProblem::seeded(prior, 3, vec![0.05; 3], Constraint::Box01, 424_242)
        .expect("valid problem");
    let options = DesignOptions {
        max_iters: 60,
        tol: 1e-6,
        mi: DesignMi::Enumeration {
            epsilon: 1e-9,
            cell_cap: DEFAULT_CELL_CAP,
        },
    };
    (problem, options)
}

/// Frozen reference values for the instances above.
///
/// The closed-form quantities (information values, gradients, divergences)
/// were computed with an external 50-digit arbitrary-precision evaluation
/// of the defining sums and rounded to the nearest f64; the crate must
/// reproduce them through entirely different code paths. The seeded-run
/// constants were recorded from an initial run of the corresponding
/// routine and guard against silent changes in RNG wiring, iteration
/// order, or accumulation.
pub mod golden {
    /// Mutual information of [`super::scalar_binary`], in nats.
    pub const SCALAR_BINARY_MI: f64 = 0.17292395151368611;

    /// d/dφ of [`SCALAR_BINARY_MI`] at φ = 1.
    pub const SCALAR_BINARY_GRAD_PHI: f64 = 0.17625134541516951;

    /// d/dλ of [`SCALAR_BINARY_MI`] at λ = 0.5.
    pub const SCALAR_BINARY_GRAD_DARK: f64 = -0.06262424865778673;

    /// Mutual information of [`super::two_by_two`], in nats.
    pub const TWO_BY_TWO_MI: f64 = 0.18137325291130699;

    /// Gradient of [`TWO_BY_TWO_MI`] with respect to the scaling matrix,
    /// row-major (output i, input j). Note the genuinely negative
    /// off-diagonal entries: raising a cross-talk coefficient can destroy
    /// information here.
    pub const TWO_BY_TWO_GRAD_PHI: [[f64; 2]; 2] = [
        [0.11438671577706558, -0.09595900344377681],
        [-0.26127266428499548, 0.17320143079700843],
    ];

    /// Gradient of [`TWO_BY_TWO_MI`] with respect to the dark-current
    /// vector. Both entries negative: background counts only hurt.
    pub const TWO_BY_TWO_GRAD_DARK: [f64; 2] = [-0.06278205563319819, -0.16341069618978439];

    /// Matrix divergence of the counting-channel generator on
    /// [`super::two_by_two`], evaluated at x = (1,0) against y = (0.6,0.6)
    /// (the prior mean), row-major (input j, output i). Negative entries
    /// are real: this generator is not convex in the entrywise order.
    pub const TWO_BY_TWO_POISSON_DIVERGENCE: [[f64; 2]; 2] = [
        [0.03531017980432486, -0.62503406072404896],
        [-0.06, 0.38048780487804878],
    ];

    /// First five atom indices drawn from [`super::two_by_two`]'s input
    /// distribution with seed 42, stream 0.
    pub const TWO_BY_TWO_FIRST_DRAWS: [usize; 5] = [1, 2, 1, 1, 0];

    /// First five Poisson outputs at x = (1,1) with seed 42, stream 1.
    pub const TWO_BY_TWO_FIRST_OUTPUTS: [[u64; 2]; 5] =
        [[1, 2], [1, 0], [1, 0], [6, 2], [1, 1]];

    /// Information at [`super::topic_design`]'s seeded starting matrix.
    pub const TOPIC_DESIGN_INITIAL_MI: f64 = 0.14986641726256789;

    /// Information after the ascent converges on [`super::topic_design`].
    /// The optimum is an exactly binary corner of the unit box, so
    /// rounding at any interior threshold leaves it unchanged and the
    /// relaxation gap is exactly zero.
    pub const TOPIC_DESIGN_FINAL_MI: f64 = 0.9245302201320175;

    /// Trace length (initial record plus accepted steps) of the frozen
    /// [`super::topic_design`] run.
    pub const TOPIC_DESIGN_RECORDS: usize = 40;
}
