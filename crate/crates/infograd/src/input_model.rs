//! Finite-support input distributions.
//!
//! Every computation in this crate assumes the channel input X takes
//! finitely many values. That choice makes posteriors, conditional means,
//! and mutual information exactly computable by enumeration, which in turn
//! gives every Monte Carlo estimator an exact reference to be checked
//! against.

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use serde::{Deserialize, Serialize};

/// Probability distribution with finite support in ℝⁿ.
///
/// Atoms are pairwise distinct and share one dimension; probabilities are
/// nonnegative and sum to 1 within 1e-12. Atoms may have negative entries;
/// operations that require nonnegative inputs (the Poisson channel)
/// validate that at the point of use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct FiniteDistribution {
    atoms: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

/// Wire format: `{"atoms": [[...], ...], "probs": [...]}`.
#[derive(Clone, Serialize, Deserialize)]
struct RawDistribution {
    atoms: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for FiniteDistribution {
    type Error = Error;
    fn try_from(raw: RawDistribution) -> Result<Self> {
        FiniteDistribution::new(raw.atoms, raw.probs)
    }
}

impl From<FiniteDistribution> for RawDistribution {
    fn from(d: FiniteDistribution) -> Self {
        RawDistribution {
            atoms: d.atoms,
            probs: d.probs,
        }
    }
}

const PROB_SUM_SLACK: f64 = 1e-12;

impl FiniteDistribution {
    /// Validates and builds a distribution.
    pub fn new(atoms: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".to_string()));
        }
        if atoms.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} atoms but {} probabilities",
                atoms.len(),
                probs.len()
            )));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::InvalidDistribution("atoms are empty vectors".to_string()));
        }
        for (k, atom) in atoms.iter().enumerate() {
            if atom.len() != dim {
                return Err(Error::InvalidDistribution(format!(
                    "atom {k} has dimension {}, expected {dim}",
                    atom.len()
                )));
            }
            if atom.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {k} has a non-finite entry"
                )));
            }
        }
        for (k, p) in probs.iter().enumerate() {
            if !p.is_finite() || *p < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "probability {k} is {p}, must be finite and nonnegative"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_SLACK {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}, must be within {PROB_SUM_SLACK} of 1"
            )));
        }
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                if atoms[i] == atoms[j] {
                    return Err(Error::InvalidDistribution(format!(
                        "atoms {i} and {j} are identical"
                    )));
                }
            }
        }
        Ok(FiniteDistribution { atoms, probs })
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty supports
    }

    /// Dimension n of the atoms.
    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.atoms[k]
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs[k]
    }

    /// True when every atom entry is ≥ 0 (required by the Poisson channel).
    pub fn is_nonnegative(&self) -> bool {
        self.atoms.iter().all(|a| a.iter().all(|&v| v >= 0.0))
    }

    /// Mean vector Σ_k p_k x_k.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (atom, &p) in self.atoms.iter().zip(&self.probs) {
            for (o, &v) in out.iter_mut().zip(atom) {
                *o += p * v;
            }
        }
        out
    }

    /// Covariance matrix Σ_k p_k (x_k − μ)(x_k − μ)ᵀ.
    pub fn covariance(&self) -> crate::numerics::Matrix {
        let mu = self.mean();
        let mut cov = crate::numerics::Matrix::zeros(self.dim(), self.dim());
        for (atom, &p) in self.atoms.iter().zip(&self.probs) {
            let centered: Vec<f64> = atom.iter().zip(&mu).map(|(&x, &m)| x - m).collect();
            let outer = crate::numerics::Matrix::outer(&centered, &centered);
            cov = cov.add(&outer.scaled(p)).expect("shapes agree");
        }
        cov
    }

    /// Index of an atom drawn by inverse CDF over the atom order.
    ///
    /// One uniform draw per call, so the sequence of samples is a pure
    /// function of the stream state.
    pub fn sample_index(&self, rng: &mut RngStream) -> usize {
        let u = rng.uniform();
        let mut acc = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        // Rounding in the cumulative sum can leave u barely above the
        // final partial sum; the last atom takes the remainder.
        self.probs.len() - 1
    }

    /// Draws an atom (by reference) by inverse CDF.
    pub fn sample(&self, rng: &mut RngStream) -> &[f64] {
        &self.atoms[self.sample_index(rng)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    #[test]
    fn validation_rejects_malformed_inputs() {
        // Probabilities must match atoms in number.
        assert!(FiniteDistribution::new(vec![vec![1.0]], vec![0.5, 0.5]).is_err());
        // Probability sum must be 1 within 1e-12.
        assert!(FiniteDistribution::new(vec![vec![1.0], vec![2.0]], vec![0.6, 0.5]).is_err());
        // Negative probabilities are rejected.
        assert!(FiniteDistribution::new(vec![vec![1.0], vec![2.0]], vec![1.5, -0.5]).is_err());
        // Atom dimensions must agree.
        assert!(
            FiniteDistribution::new(vec![vec![1.0], vec![2.0, 3.0]], vec![0.5, 0.5]).is_err()
        );
        // Duplicate atoms are rejected.
        assert!(
            FiniteDistribution::new(vec![vec![1.0, 2.0], vec![1.0, 2.0]], vec![0.5, 0.5])
                .is_err()
        );
        // Empty support is rejected.
        assert!(FiniteDistribution::new(vec![], vec![]).is_err());
    }

    #[test]
    fn sum_slack_is_honoured_at_the_boundary() {
        let d = FiniteDistribution::new(
            vec![vec![0.0], vec![1.0]],
            vec![0.5, 0.5 + 0.9e-12],
        );
        assert!(d.is_ok());
        let d = FiniteDistribution::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5 + 1e-11]);
        assert!(d.is_err());
    }

    #[test]
    fn mean_of_reference_instance() {
        let d = demo::two_by_two().1;
        let mu = d.mean();
        assert!((mu[0] - 0.6).abs() < 1e-12);
        assert!((mu[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn single_atom_distribution_is_deterministic() {
        let d = FiniteDistribution::new(vec![vec![2.0, 3.0]], vec![1.0]).unwrap();
        let mut rng = RngStream::new(1, 0);
        for _ in 0..10 {
            assert_eq!(d.sample(&mut rng), &[2.0, 3.0]);
        }
        assert_eq!(d.mean(), vec![2.0, 3.0]);
    }

    #[test]
    fn zero_probability_atom_is_never_drawn() {
        let d = FiniteDistribution::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0.5, 0.0, 0.5],
        )
        .unwrap();
        let mut rng = RngStream::new(9, 2);
        for _ in 0..2000 {
            assert_ne!(d.sample_index(&mut rng), 1);
        }
    }

    #[test]
    fn sample_frequencies_match_probabilities() {
        let d = demo::two_by_two().1;
        let mut rng = RngStream::new(2024, 0);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[d.sample_index(&mut rng)] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            // 4σ band for a binomial proportion at n = 1e5.
            let sigma = (d.prob(k) * (1.0 - d.prob(k)) / n as f64).sqrt();
            assert!(
                (freq - d.prob(k)).abs() < 4.0 * sigma,
                "atom {k}: freq {freq} vs prob {}",
                d.prob(k)
            );
        }
    }

    #[test]
    fn seeded_draw_sequence_is_frozen() {
        // First five atom indices for the reference two-by-two instance,
        // seed 42, stream 0. Recorded from an initial run; any change
        // signals an unintended RNG or sampling-order change.
        let d = demo::two_by_two().1;
        let mut rng = RngStream::new(42, 0);
        let drawn: Vec<usize> = (0..5).map(|_| d.sample_index(&mut rng)).collect();
        assert_eq!(drawn, demo::golden::TWO_BY_TWO_FIRST_DRAWS);
    }

    #[test]
    fn json_round_trip_preserves_the_distribution() {
        let d = demo::two_by_two().1;
        let text = serde_json::to_string(&d).unwrap();
        let back: FiniteDistribution = serde_json::from_str(&text).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn json_rejects_invalid_distributions() {
        let bad = r#"{"atoms": [[1.0], [2.0]], "probs": [0.7, 0.7]}"#;
        assert!(serde_json::from_str::<FiniteDistribution>(bad).is_err());
    }

    #[test]
    fn nonnegativity_flag_reflects_atom_signs() {
        let signed =
            FiniteDistribution::new(vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        assert!(!signed.is_nonnegative());
        let unsigned = demo::two_by_two().1;
        assert!(unsigned.is_nonnegative());
    }
}
