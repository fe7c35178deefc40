//! Matrix-valued Bregman generators and their divergences.

use std::fmt;
use std::sync::Arc;

use crate::bregman::scalar::ScalarGenerator;
use crate::channels::{GaussianChannel, PoissonChannel};
use crate::error::{Error, Result};
use crate::numerics::{symmetric_eigenvalues, Matrix, RngStream};

type EvalFn = Arc<dyn Fn(&[f64]) -> Result<Matrix> + Send + Sync>;
type FrechetFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<Matrix> + Send + Sync>;

/// Cone giving the partial order in which matrix divergences are
/// compared against zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeOrder {
    /// Every entry nonnegative.
    Entrywise,
    /// Symmetric positive semidefinite (square matrices only).
    PositiveSemidefinite,
}

impl ConeOrder {
    pub fn name(self) -> &'static str {
        match self {
            ConeOrder::Entrywise => "entrywise",
            ConeOrder::PositiveSemidefinite => "positive_semidefinite",
        }
    }

    /// Whether `m` lies in the cone up to slack `tol`.
    ///
    /// For the semidefinite cone a matrix whose asymmetry exceeds the
    /// slack is simply not a member; eigenvalues are only consulted for
    /// (numerically) symmetric matrices.
    pub fn contains(self, m: &Matrix, tol: f64) -> Result<bool> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cone tolerance must be nonnegative, got {tol}"
            )));
        }
        match self {
            ConeOrder::Entrywise => Ok(m.min_entry() >= -tol),
            ConeOrder::PositiveSemidefinite => {
                if m.rows() != m.cols() {
                    return Err(Error::ShapeMismatch {
                        context: "semidefinite cone membership",
                        expected: "square matrix".to_string(),
                        actual: format!("{}x{}", m.rows(), m.cols()),
                    });
                }
                if m.asymmetry() > tol.max(1e-12 * m.max_abs().max(1.0)) {
                    return Ok(false);
                }
                let eigs = symmetric_eigenvalues(m)?;
                Ok(eigs.first().is_none_or(|&lo| lo >= -tol))
            }
        }
    }
}

/// A matrix-valued Bregman generator: `F` from input vectors to
/// `rows x cols` matrices, together with its Frechet derivative.
///
/// `frechet(y, h)` must be linear in `h`; every identity downstream
/// (duality of summation orders, the Pythagorean split, the gradient
/// equivalence) leans on that linearity.
#[derive(Clone)]
pub struct MatrixGenerator {
    name: String,
    input_dim: usize,
    rows: usize,
    cols: usize,
    cone: ConeOrder,
    /// Whether convexity in `cone`'s order is established for this
    /// generator. Property sweeps still measure it either way; the flag
    /// records the claim being tested, not a hope.
    convexity_verified: bool,
    /// Box from which sweeps draw domain points.
    sample_box: (f64, f64),
    eval: EvalFn,
    frechet: FrechetFn,
}

impl fmt::Debug for MatrixGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixGenerator")
            .field("name", &self.name)
            .field("input_dim", &self.input_dim)
            .field("shape", &(self.rows, self.cols))
            .field("cone", &self.cone)
            .field("convexity_verified", &self.convexity_verified)
            .finish()
    }
}

impl MatrixGenerator {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        input_dim: usize,
        rows: usize,
        cols: usize,
        cone: ConeOrder,
        convexity_verified: bool,
        sample_box: (f64, f64),
        eval: impl Fn(&[f64]) -> Result<Matrix> + Send + Sync + 'static,
        frechet: impl Fn(&[f64], &[f64]) -> Result<Matrix> + Send + Sync + 'static,
    ) -> Self {
        MatrixGenerator {
            name: name.into(),
            input_dim,
            rows,
            cols,
            cone,
            convexity_verified,
            sample_box,
            eval: Arc::new(eval),
            frechet: Arc::new(frechet),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn cone(&self) -> ConeOrder {
        self.cone
    }

    pub fn convexity_verified(&self) -> bool {
        self.convexity_verified
    }

    /// Box from which [`Self::sample_point`] draws. A strictly positive
    /// lower edge signals a generator confined to the positive orthant.
    pub fn sample_box(&self) -> (f64, f64) {
        self.sample_box
    }

    fn check_input(&self, label: &'static str, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch {
                context: "matrix generator input",
                expected: format!("{} components", self.input_dim),
                actual: format!("{} ({label})", x.len()),
            });
        }
        Ok(())
    }

    fn checked(&self, m: Matrix, label: &'static str) -> Result<Matrix> {
        if m.rows() != self.rows || m.cols() != self.cols {
            return Err(Error::ShapeMismatch {
                context: "matrix generator output",
                expected: format!("{}x{}", self.rows, self.cols),
                actual: format!("{}x{} ({label})", m.rows(), m.cols()),
            });
        }
        Ok(m)
    }

    /// `F(x)`.
    pub fn value(&self, x: &[f64]) -> Result<Matrix> {
        self.check_input("value", x)?;
        self.checked((self.eval)(x)?, "value")
    }

    /// `DF(y)[h]`.
    pub fn derivative(&self, y: &[f64], h: &[f64]) -> Result<Matrix> {
        self.check_input("derivative base point", y)?;
        self.check_input("derivative direction", h)?;
        self.checked((self.frechet)(y, h)?, "derivative")
    }

    /// A point drawn uniformly from the sampling box, one coordinate per
    /// input dimension.
    pub fn sample_point(&self, rng: &mut RngStream) -> Vec<f64> {
        let (lo, hi) = self.sample_box;
        (0..self.input_dim)
            .map(|_| lo + rng.uniform() * (hi - lo))
            .collect()
    }
}

/// `F(x) - F(y) - DF(y)[x - y]`.
pub fn matrix_divergence(g: &MatrixGenerator, x: &[f64], y: &[f64]) -> Result<Matrix> {
    let fx = g.value(x)?;
    let fy = g.value(y)?;
    let h: Vec<f64> = x.iter().zip(y).map(|(&a, &b)| a - b).collect();
    let df = g.derivative(y, &h)?;
    fx.sub(&fy)?.sub(&df)
}

/// The counting-channel generator: for a channel with scaling `phi`
/// (m outputs by n inputs) and dark current `dark`,
///
/// ```text
/// F(x)[j, i] = x_j ln r_i(x) - x_j + 1,    r(x) = phi x + dark,
/// ```
///
/// an n x m matrix pairing input components with outputs. Its divergence
/// is genuinely not entrywise-nonnegative (the crate's reference instance
/// exhibits entries near -0.6), so `convexity_verified` is false; the
/// gradient identity in the equivalence module holds regardless, because
/// the terms that break nonnegativity average out against the posterior
/// mean.
pub fn poisson_generator(ch: &PoissonChannel) -> MatrixGenerator {
    let n = ch.inputs();
    let m = ch.outputs();
    let eval_ch = ch.clone();
    let frechet_ch = ch.clone();
    MatrixGenerator::new(
        "counting_channel",
        n,
        n,
        m,
        ConeOrder::Entrywise,
        false,
        (0.05, 4.0),
        move |x| {
            let rates = eval_ch.rates(x)?;
            if let Some(i) = rates.iter().position(|&r| r <= 0.0) {
                return Err(Error::Domain(format!(
                    "counting generator needs strictly positive rates, rate {i} is {}",
                    rates[i]
                )));
            }
            let mut out = Matrix::zeros(n, m);
            for j in 0..n {
                for i in 0..m {
                    out[(j, i)] = x[j] * rates[i].ln() - x[j] + 1.0;
                }
            }
            Ok(out)
        },
        move |y, h| {
            let rho = frechet_ch.rates(y)?;
            if let Some(i) = rho.iter().position(|&r| r <= 0.0) {
                return Err(Error::Domain(format!(
                    "counting generator needs strictly positive rates, rate {i} is {}",
                    rho[i]
                )));
            }
            // phi h may have negative entries even on the domain; rates()
            // validates the input sign, so apply the matrix directly.
            let phi_h = frechet_ch.phi().matvec(h)?;
            let mut out = Matrix::zeros(n, m);
            for j in 0..n {
                for i in 0..m {
                    out[(j, i)] = h[j] * rho[i].ln() + y[j] * phi_h[i] / rho[i] - h[j];
                }
            }
            Ok(out)
        },
    )
}

/// The Gaussian-channel generator `F(x) = phi x x^T` (m x n). Its
/// divergence collapses to `phi (x-y)(x-y)^T`, which the equivalence
/// module exploits sample by sample.
///
/// When the scaling matrix is a nonnegative multiple of the identity the
/// divergence is a scaled outer square, positive semidefinite for every
/// argument pair, so the generator declares the semidefinite cone with
/// verified convexity. Any other scaling matrix leaves the divergence
/// sign-indefinite; the declaration is then entrywise and unverified,
/// and recorded violations are data, not bugs.
pub fn gaussian_generator(ch: &GaussianChannel) -> MatrixGenerator {
    let n = ch.inputs();
    let m = ch.outputs();
    let phi = ch.phi();
    let scaled_identity = m == n
        && (0..m).all(|i| {
            (0..n).all(|j| phi[(i, j)] == if i == j { phi[(0, 0)] } else { 0.0 })
        })
        && phi[(0, 0)] >= 0.0;
    let (cone, verified) = if scaled_identity {
        (ConeOrder::PositiveSemidefinite, true)
    } else {
        (ConeOrder::Entrywise, false)
    };
    let eval_phi = phi.clone();
    let frechet_phi = phi.clone();
    MatrixGenerator::new(
        "gaussian_channel",
        n,
        m,
        n,
        cone,
        verified,
        (-3.0, 3.0),
        move |x| eval_phi.matmul(&Matrix::outer(x, x)),
        move |y, h| {
            let hy = Matrix::outer(h, y);
            let yh = Matrix::outer(y, h);
            frechet_phi.matmul(&hy.add(&yh)?)
        },
    )
}

/// `F(x) = x x^T`, the canonical semidefinite-convex generator; its
/// divergence `(x-y)(x-y)^T` is always positive semidefinite.
pub fn outer_square_generator(input_dim: usize) -> MatrixGenerator {
    MatrixGenerator::new(
        "outer_square",
        input_dim,
        input_dim,
        input_dim,
        ConeOrder::PositiveSemidefinite,
        true,
        (-3.0, 3.0),
        |x| Ok(Matrix::outer(x, x)),
        |y, h| Matrix::outer(h, y).add(&Matrix::outer(y, h)),
    )
}

/// Lifts a scalar generator to matrices by repeating it across rows:
/// entry (i, j) of `F(x)` is `g(x_j)` for every row i. The divergence is
/// then entrywise a scalar divergence, hence entrywise nonnegative, which
/// makes this the workhorse for sweeps that must find zero violations.
pub fn stacked_scalar(g: &ScalarGenerator, rows: usize, input_dim: usize) -> MatrixGenerator {
    let eval_g = g.clone();
    let frechet_g = g.clone();
    let (dlo, dhi) = g.sample_range();
    MatrixGenerator::new(
        format!("stacked({})", g.name()),
        input_dim,
        rows,
        input_dim,
        ConeOrder::Entrywise,
        true,
        (dlo, dhi),
        move |x| {
            let mut out = Matrix::zeros(rows, input_dim);
            for (j, &xj) in x.iter().enumerate() {
                let v = eval_g.value(xj)?;
                for i in 0..rows {
                    out[(i, j)] = v;
                }
            }
            Ok(out)
        },
        move |y, h| {
            let mut out = Matrix::zeros(rows, input_dim);
            for (j, (&yj, &hj)) in y.iter().zip(h).enumerate() {
                let v = frechet_g.slope(yj)? * hj;
                for i in 0..rows {
                    out[(i, j)] = v;
                }
            }
            Ok(out)
        },
    )
}

/// `F(x) = |x|^2 J` with `J` the all-ones matrix of the requested shape.
/// Divergence `|x - y|^2 J`: entrywise nonnegative, convenient as a
/// companion in linearity checks against any same-shaped generator.
pub fn uniform_squared_norm(input_dim: usize, rows: usize, cols: usize) -> MatrixGenerator {
    MatrixGenerator::new(
        "uniform_squared_norm",
        input_dim,
        rows,
        cols,
        ConeOrder::Entrywise,
        true,
        (-3.0, 3.0),
        move |x| {
            let sq: f64 = x.iter().map(|v| v * v).sum();
            Ok(Matrix::filled(rows, cols, sq))
        },
        move |y, h| {
            let dot: f64 = y.iter().zip(h).map(|(&a, &b)| a * b).sum();
            Ok(Matrix::filled(rows, cols, 2.0 * dot))
        },
    )
}

/// `a F + b G` for same-shaped generators over the same cone.
///
/// The divergence map is linear in the generator, so the combination's
/// divergence must equal the same combination of divergences; property
/// sweeps verify that to tight tolerance. Convexity survives only for
/// nonnegative coefficients on verified generators.
pub fn linear_combination(
    a: f64,
    f: &MatrixGenerator,
    b: f64,
    g: &MatrixGenerator,
) -> Result<MatrixGenerator> {
    if f.input_dim != g.input_dim || f.rows != g.rows || f.cols != g.cols {
        return Err(Error::ShapeMismatch {
            context: "generator combination",
            expected: format!("{} -> {}x{}", f.input_dim, f.rows, f.cols),
            actual: format!("{} -> {}x{}", g.input_dim, g.rows, g.cols),
        });
    }
    if f.cone != g.cone {
        return Err(Error::InvalidParameter(format!(
            "cannot combine generators over different cones ({} vs {})",
            f.cone.name(),
            g.cone.name()
        )));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite(format!(
            "combination coefficients {a}, {b}"
        )));
    }
    let (fe, ge) = (f.eval.clone(), g.eval.clone());
    let (fd, gd) = (f.frechet.clone(), g.frechet.clone());
    let sample_box = (
        f.sample_box.0.max(g.sample_box.0),
        f.sample_box.1.min(g.sample_box.1),
    );
    Ok(MatrixGenerator {
        name: format!("{}*{} + {}*{}", a, f.name, b, g.name),
        input_dim: f.input_dim,
        rows: f.rows,
        cols: f.cols,
        cone: f.cone,
        convexity_verified: f.convexity_verified
            && g.convexity_verified
            && a >= 0.0
            && b >= 0.0,
        sample_box,
        eval: Arc::new(move |x| fe(x)?.scaled(a).add(&ge(x)?.scaled(b))),
        frechet: Arc::new(move |y, h| fd(y, h)?.scaled(a).add(&gd(y, h)?.scaled(b))),
    })
}
