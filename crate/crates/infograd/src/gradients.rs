//! Gradients of mutual information with respect to channel parameters.
//!
//! For the counting channel the gradient with respect to the scaling
//! matrix splits into two expectations: an input-side term that averages
//! `x_j ln r_i(x)` over the atoms, and an output-side term that averages
//! `E[X_j | Y] ln E[r_i(X) | Y]` over the outputs, where `r(x)` is the
//! per-coordinate rate vector. The dark-current gradient has the same
//! shape without the `x_j` factor. For the Gaussian channel the gradient
//! is the scaling matrix times the minimum-mean-square-error matrix of
//! the conditional-mean estimator.
//!
//! Every quantity is computable two ways: a closed-form route
//! (enumeration over a truncated output grid, or the error-covariance
//! product) and a numerical route (Monte Carlo, or finite differences of
//! mutual information on a frozen grid). The routes share no accumulation
//! code, so their agreement is evidence rather than tautology.

use rayon::prelude::*;

use crate::channels::{
    poisson_log_pmf, poisson_sample, GaussianChannel, OutputGrid, PoissonChannel,
};
use crate::error::{Error, Result};
use crate::inference::{conditional_mean, mmse_matrix, posterior};
use crate::information::{
    index_blocks, mi_gaussian_quadrature, mi_poisson_on_grid, PmfTables, QuadratureSpec,
    DEFAULT_CELL_CAP,
};
use crate::input_model::FiniteDistribution;
use crate::numerics::{
    default_fd_step, finite_difference_scalar, forward_difference_richardson, logsumexp, KahanSum,
    Matrix, RngStream,
};

/// Default output-grid tail mass for gradient enumeration.
pub const DEFAULT_GRID_EPSILON: f64 = 1e-10;

/// How a [`GradientEstimate`] was computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMethod {
    /// Two-term expectation evaluated exactly on a truncated output grid.
    Enumeration,
    /// Two-term expectation averaged over sampled (input, output) pairs.
    MonteCarlo,
    /// Scaling matrix times the Monte Carlo error-covariance matrix
    /// (Gaussian channel only).
    MmseProduct,
    /// Finite differences of mutual information.
    FiniteDifference,
}

impl GradientMethod {
    /// Report token. The closed-form route is named for what it
    /// evaluates, not how: enumeration is its exact evaluation strategy,
    /// Monte Carlo its sampled one.
    pub fn name(self) -> &'static str {
        match self {
            GradientMethod::Enumeration => "theorem",
            GradientMethod::MonteCarlo => "monte_carlo",
            GradientMethod::MmseProduct => "gaussian_mmse",
            GradientMethod::FiniteDifference => "finite_difference",
        }
    }
}

/// A mutual-information gradient with per-entry error accounting.
///
/// `phi` is laid out like the scaling matrix itself: entry (i, j) is the
/// derivative with respect to the coefficient mapping input j to output i.
/// The meaning of the error fields follows the method: a rigorous
/// truncation bound for enumeration, one standard error for Monte Carlo
/// and the error-covariance product, and a step-halving estimate for
/// finite differences.
#[derive(Clone, Debug)]
pub struct GradientEstimate {
    pub phi: Matrix,
    pub phi_error: Matrix,
    /// Dark-current gradient; `None` for the Gaussian channel, which has
    /// no dark current.
    pub dark: Option<Vec<f64>>,
    pub dark_error: Option<Vec<f64>>,
    pub method: GradientMethod,
    /// Monte Carlo sample count, where applicable.
    pub samples: Option<u64>,
    /// Output mass missed by the truncated grid (0 where not applicable).
    pub truncation_mass_deficit: f64,
}

/// Per-atom rate vectors, all entries required strictly positive.
///
/// The gradient expectations contain `ln r_i(x)` both directly and inside
/// the posterior average, so a zero rate at any atom puts the parameter
/// on the boundary where the derivative does not exist.
fn positive_atom_rates(ch: &PoissonChannel, d: &FiniteDistribution) -> Result<Vec<Vec<f64>>> {
    if d.dim() != ch.inputs() {
        return Err(Error::ShapeMismatch {
            context: "gradient",
            expected: format!("input dimension {}", ch.inputs()),
            actual: format!("{}", d.dim()),
        });
    }
    let mut all = Vec::with_capacity(d.len());
    for (k, atom) in d.atoms().iter().enumerate() {
        let rates = ch.rates(atom)?;
        if let Some(i) = rates.iter().position(|&r| r <= 0.0) {
            return Err(Error::Domain(format!(
                "gradient needs strictly positive rates at every atom; \
                 atom {k} produces rate 0 at output {i}"
            )));
        }
        all.push(rates);
    }
    Ok(all)
}

struct GradBlockSums {
    term2_phi: Vec<KahanSum>,
    term2_dark: Vec<KahanSum>,
}

/// Counting-channel gradient by exact summation over a caller-supplied
/// output grid.
///
/// The input-side terms are finite sums over the atoms and carry no
/// truncation error; the output-side terms are truncated, and the error
/// fields bound the missing contribution by the grid's mass deficit times
/// a global bound on the integrand (the posterior mean of `X_j` lies in
/// the convex hull of the atom values, and the posterior rate lies
/// between the extreme atom rates).
pub fn poisson_gradients_on_grid(
    ch: &PoissonChannel,
    d: &FiniteDistribution,
    grid: &OutputGrid,
) -> Result<GradientEstimate> {
    let rates = positive_atom_rates(ch, d)?;
    let tables = PmfTables::build(ch, d, grid)?;
    let log_probs: Vec<f64> = d.probs().iter().map(|&p| p.ln()).collect();
    let n_atoms = d.len();
    let m = ch.outputs();
    let n = ch.inputs();

    // Input-side terms, exact over the atoms.
    let mut term1_phi = Matrix::zeros(m, n);
    let mut term1_dark = vec![0.0f64; m];
    for (k, atom) in d.atoms().iter().enumerate() {
        let p = d.prob(k);
        for i in 0..m {
            let log_rate = rates[k][i].ln();
            term1_dark[i] += p * log_rate;
            for j in 0..n {
                term1_phi[(i, j)] += p * atom[j] * log_rate;
            }
        }
    }

    const BLOCK: u64 = 1 << 14;
    let blocks = index_blocks(grid.num_cells(), BLOCK);

    let partials: Vec<GradBlockSums> = blocks
        .par_iter()
        .map(|&(start, len)| {
            let mut sums = GradBlockSums {
                term2_phi: vec![KahanSum::new(); m * n],
                term2_dark: vec![KahanSum::new(); m],
            };
            let mut cell = vec![0u64; m];
            grid.decode(start, &mut cell);
            let mut joint = vec![0.0f64; n_atoms];
            let mut weights = vec![0.0f64; n_atoms];
            let mut post_mean = vec![0.0f64; n];
            let mut post_rate = vec![0.0f64; m];
            for step in 0..len {
                if step > 0 {
                    grid.advance(&mut cell);
                }
                for k in 0..n_atoms {
                    joint[k] = log_probs[k] + tables.loglik(k, &cell);
                }
                let log_py = logsumexp(&joint);
                if log_py == f64::NEG_INFINITY {
                    continue; // cell unreachable under every atom
                }
                let py = log_py.exp();
                for k in 0..n_atoms {
                    weights[k] = (joint[k] - log_py).exp();
                }
                post_mean.iter_mut().for_each(|v| *v = 0.0);
                post_rate.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..n_atoms {
                    let w = weights[k];
                    if w == 0.0 {
                        continue;
                    }
                    for (pm, &xj) in post_mean.iter_mut().zip(d.atom(k)) {
                        *pm += w * xj;
                    }
                    for (pr, &rk) in post_rate.iter_mut().zip(&rates[k]) {
                        *pr += w * rk;
                    }
                }
                for i in 0..m {
                    let log_rho = post_rate[i].ln();
                    sums.term2_dark[i].add(py * log_rho);
                    for j in 0..n {
                        sums.term2_phi[i * n + j].add(py * post_mean[j] * log_rho);
                    }
                }
            }
            sums
        })
        .collect();

    let mut term2_phi = vec![KahanSum::new(); m * n];
    let mut term2_dark = vec![KahanSum::new(); m];
    for p in &partials {
        for (acc, part) in term2_phi.iter_mut().zip(&p.term2_phi) {
            acc.merge(*part);
        }
        for (acc, part) in term2_dark.iter_mut().zip(&p.term2_dark) {
            acc.merge(*part);
        }
    }

    // Global bounds on the truncated integrands, for the error fields.
    let deficit = grid.deficit();
    let mut log_rate_bound = vec![0.0f64; m];
    for i in 0..m {
        for r in &rates {
            log_rate_bound[i] = log_rate_bound[i].max(r[i].ln().abs());
        }
    }
    let mut atom_bound = vec![0.0f64; n];
    for atom in d.atoms() {
        for (b, &xj) in atom_bound.iter_mut().zip(atom) {
            *b = b.max(xj.abs());
        }
    }

    let mut phi = Matrix::zeros(m, n);
    let mut phi_error = Matrix::zeros(m, n);
    let mut dark = vec![0.0f64; m];
    let mut dark_error = vec![0.0f64; m];
    for i in 0..m {
        dark[i] = term1_dark[i] - term2_dark[i].total();
        dark_error[i] = deficit * log_rate_bound[i];
        for j in 0..n {
            phi[(i, j)] = term1_phi[(i, j)] - term2_phi[i * n + j].total();
            phi_error[(i, j)] = deficit * atom_bound[j] * log_rate_bound[i];
        }
    }

    Ok(GradientEstimate {
        phi,
        phi_error,
        dark: Some(dark),
        dark_error: Some(dark_error),
        method: GradientMethod::Enumeration,
        samples: None,
        truncation_mass_deficit: deficit,
    })
}

/// Counting-channel gradient on a fresh grid capturing output mass
/// `1 - epsilon`, refusing grids beyond `cell_cap` cells.
pub fn poisson_gradients_enum_with_cap(
    ch: &PoissonChannel,
    d: &FiniteDistribution,
    epsilon: f64,
    cell_cap: u128,
) -> Result<GradientEstimate> {
    let grid = OutputGrid::build(ch, d, epsilon)?;
    let cells = grid.num_cells();
    if cells > cell_cap {
        return Err(Error::GridTooLarge {
            cells,
            cap: cell_cap,
        });
    }
    poisson_gradients_on_grid(ch, d, &grid)
}

/// [`poisson_gradients_enum_with_cap`] with the default tail mass and
/// cell cap.
pub fn poisson_gradients_enum(
    ch: &PoissonChannel,
    d: &FiniteDistribution,
) -> Result<GradientEstimate> {
    poisson_gradients_enum_with_cap(ch, d, DEFAULT_GRID_EPSILON, DEFAULT_CELL_CAP)
}

/// Counting-channel gradient by Monte Carlo over (input, output) pairs.
///
/// Each sample draws an atom and an output, then evaluates both gradient
/// terms at that sample: the input term from the drawn atom, the output
/// term through the exact posterior given the drawn output. Per-entry
/// standard errors come from the sample variance. Block-indexed
/// substreams make the result independent of the worker-thread count.
pub fn poisson_gradients_mc(
    ch: &PoissonChannel,
    d: &FiniteDistribution,
    samples: u64,
    rng: &RngStream,
) -> Result<GradientEstimate> {
    let rates = positive_atom_rates(ch, d)?;
    if samples == 0 {
        return Err(Error::InvalidParameter(
            "Monte Carlo sample count must be positive".to_string(),
        ));
    }
    let m = ch.outputs();
    let n = ch.inputs();
    let cells = m * n + m; // phi entries then dark entries

    const BLOCK: u64 = 1 << 16;
    let blocks = index_blocks(samples as u128, BLOCK);

    let partials: Result<Vec<(Vec<f64>, Vec<f64>)>> = blocks
        .par_iter()
        .map(|&(start, len)| {
            let block_idx = start / BLOCK as u128;
            let mut stream = rng.substream(block_idx as u64);
            let mut sum = vec![0.0f64; cells];
            let mut sumsq = vec![0.0f64; cells];
            let mut contrib = vec![0.0f64; cells];
            for _ in 0..len {
                let k = d.sample_index(&mut stream);
                let atom = d.atom(k);
                let y = poisson_sample(ch, atom, &mut stream)?;
                let loglik: Result<Vec<f64>> = d
                    .atoms()
                    .iter()
                    .map(|a| poisson_log_pmf(ch, a, &y))
                    .collect();
                let post = posterior(d, &loglik?)?;
                let post_mean = conditional_mean(d, &post)?;
                let mut post_rate = vec![0.0f64; m];
                for (w, r) in post.weights().iter().zip(&rates) {
                    for (pr, &ri) in post_rate.iter_mut().zip(r) {
                        *pr += w * ri;
                    }
                }
                for i in 0..m {
                    let log_r = rates[k][i].ln();
                    let log_rho = post_rate[i].ln();
                    for j in 0..n {
                        contrib[i * n + j] = atom[j] * log_r - post_mean[j] * log_rho;
                    }
                    contrib[m * n + i] = log_r - log_rho;
                }
                for (c, (s, sq)) in contrib.iter().zip(sum.iter_mut().zip(sumsq.iter_mut())) {
                    *s += c;
                    *sq += c * c;
                }
            }
            Ok((sum, sumsq))
        })
        .collect();

    let mut sum = vec![KahanSum::new(); cells];
    let mut sumsq = vec![KahanSum::new(); cells];
    for (s, sq) in partials? {
        for (acc, v) in sum.iter_mut().zip(&s) {
            acc.add(*v);
        }
        for (acc, v) in sumsq.iter_mut().zip(&sq) {
            acc.add(*v);
        }
    }

    let nf = samples as f64;
    let stats = |idx: usize| {
        let mean = sum[idx].total() / nf;
        let var = (sumsq[idx].total() / nf - mean * mean).max(0.0);
        (mean, (var / nf).sqrt())
    };

    let mut phi = Matrix::zeros(m, n);
    let mut phi_error = Matrix::zeros(m, n);
    let mut dark = vec![0.0f64; m];
    let mut dark_error = vec![0.0f64; m];
    for i in 0..m {
        for j in 0..n {
            let (mean, se) = stats(i * n + j);
            phi[(i, j)] = mean;
            phi_error[(i, j)] = se;
        }
        let (mean, se) = stats(m * n + i);
        dark[i] = mean;
        dark_error[i] = se;
    }

    Ok(GradientEstimate {
        phi,
        phi_error,
        dark: Some(dark),
        dark_error: Some(dark_error),
        method: GradientMethod::MonteCarlo,
        samples: Some(samples),
        truncation_mass_deficit: 0.0,
    })
}

/// Gaussian-channel gradient: the scaling matrix times the Monte Carlo
/// estimate of the conditional-mean error covariance.
///
/// The per-entry error field propagates the covariance estimate's
/// standard errors through the product by the triangle inequality, which
/// is conservative.
pub fn gaussian_gradient(
    ch: &GaussianChannel,
    d: &FiniteDistribution,
    samples: u64,
    rng: &RngStream,
) -> Result<GradientEstimate> {
    let mmse = mmse_matrix(ch, d, samples, rng)?;
    let phi = ch.phi().matmul(&mmse.matrix)?;
    let abs_phi = ch.phi().map(f64::abs);
    let phi_error = abs_phi.matmul(&mmse.std_err)?;
    Ok(GradientEstimate {
        phi,
        phi_error,
        dark: None,
        dark_error: None,
        method: GradientMethod::MmseProduct,
        samples: Some(mmse.samples),
        truncation_mass_deficit: 0.0,
    })
}

/// Which channel parameter a finite difference perturbs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdTarget {
    /// Scaling-matrix entry (output row, input column).
    Phi { row: usize, col: usize },
    /// Dark-current entry.
    Dark { index: usize },
}

fn poisson_param(ch: &PoissonChannel, target: FdTarget) -> Result<f64> {
    match target {
        FdTarget::Phi { row, col } => {
            if row >= ch.outputs() || col >= ch.inputs() {
                return Err(Error::InvalidParameter(format!(
                    "scaling entry ({row}, {col}) out of range for a {}x{} matrix",
                    ch.outputs(),
                    ch.inputs()
                )));
            }
            Ok(ch.phi()[(row, col)])
        }
        FdTarget::Dark { index } => {
            if index >= ch.outputs() {
                return Err(Error::InvalidParameter(format!(
                    "dark-current entry {index} out of range for {} outputs",
                    ch.outputs()
                )));
            }
            Ok(ch.dark()[index])
        }
    }
}

fn poisson_with_param(ch: &PoissonChannel, target: FdTarget, value: f64) -> Result<PoissonChannel> {
    match target {
        FdTarget::Phi { row, col } => {
            let mut phi = ch.phi().clone();
            phi[(row, col)] = value;
            ch.with_phi(phi)
        }
        FdTarget::Dark { index } => {
            let mut dark = ch.dark().to_vec();
            dark[index] = value;
            ch.with_dark(dark)
        }
    }
}

/// Finite difference of counting-channel mutual information in one
/// parameter.
///
/// All evaluations share a single output grid built for the largest
/// perturbed parameter value, so truncation shifts cancel in the
/// difference instead of polluting it. Uses the central rule when the
/// parameter sits at least `2h` inside the nonnegativity boundary and a
/// second-order one-sided rule otherwise.
pub fn fd_mi_poisson(
    ch: &PoissonChannel,
    d: &FiniteDistribution,
    target: FdTarget,
    step: Option<f64>,
    epsilon: f64,
    cell_cap: u128,
) -> Result<f64> {
    let x0 = poisson_param(ch, target)?;
    let h = step.unwrap_or_else(|| default_fd_step(x0));
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "finite difference step must be positive and finite, got {h}"
        )));
    }
    let central = x0 >= 2.0 * h;
    let envelope = if central { x0 + h } else { x0 + 2.0 * h };

    let grid_channel = poisson_with_param(ch, target, envelope)?;
    let grid = OutputGrid::build(&grid_channel, d, epsilon)?;
    let cells = grid.num_cells();
    if cells > cell_cap {
        return Err(Error::GridTooLarge {
            cells,
            cap: cell_cap,
        });
    }

    let eval = |v: f64| -> Result<f64> {
        let perturbed = poisson_with_param(ch, target, v)?;
        Ok(mi_poisson_on_grid(&perturbed, d, &grid)?.value)
    };
    if central {
        finite_difference_scalar(eval, x0, h)
    } else {
        forward_difference_richardson(eval, x0, h)
    }
}

/// Finite difference of Gaussian-channel mutual information in one
/// scaling entry, on a caller-frozen quadrature box.
pub fn fd_mi_gaussian(
    ch: &GaussianChannel,
    d: &FiniteDistribution,
    target: FdTarget,
    step: Option<f64>,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let (row, col) = match target {
        FdTarget::Phi { row, col } => (row, col),
        FdTarget::Dark { .. } => {
            return Err(Error::InvalidParameter(
                "the Gaussian channel has no dark current to perturb".to_string(),
            ))
        }
    };
    if row >= ch.outputs() || col >= ch.inputs() {
        return Err(Error::InvalidParameter(format!(
            "scaling entry ({row}, {col}) out of range for a {}x{} matrix",
            ch.outputs(),
            ch.inputs()
        )));
    }
    let x0 = ch.phi()[(row, col)];
    let h = step.unwrap_or_else(|| default_fd_step(x0));
    let eval = |v: f64| -> Result<f64> {
        let mut phi = ch.phi().clone();
        phi[(row, col)] = v;
        let perturbed = ch.with_phi(phi)?;
        Ok(mi_gaussian_quadrature(&perturbed, d, spec)?.value)
    };
    // Scaling entries may be any real number, so the central rule always
    // applies.
    finite_difference_scalar(eval, x0, h)
}

/// Full finite-difference gradient for the counting channel.
///
/// Each entry is differenced at two step sizes; the value is the
/// finer-step estimate and the error field the difference between the
/// two, an a-posteriori estimate of the truncation error.
pub fn fd_gradients_poisson(
    ch: &PoissonChannel,
    d: &FiniteDistribution,
    epsilon: f64,
    cell_cap: u128,
) -> Result<GradientEstimate> {
    let m = ch.outputs();
    let n = ch.inputs();
    let mut phi = Matrix::zeros(m, n);
    let mut phi_error = Matrix::zeros(m, n);
    let mut dark = vec![0.0f64; m];
    let mut dark_error = vec![0.0f64; m];

    let pair = |target: FdTarget| -> Result<(f64, f64)> {
        let x0 = poisson_param(ch, target)?;
        let h = default_fd_step(x0);
        let coarse = fd_mi_poisson(ch, d, target, Some(h), epsilon, cell_cap)?;
        let fine = fd_mi_poisson(ch, d, target, Some(h / 2.0), epsilon, cell_cap)?;
        Ok((fine, (coarse - fine).abs()))
    };

    for i in 0..m {
        for j in 0..n {
            let (v, e) = pair(FdTarget::Phi { row: i, col: j })?;
            phi[(i, j)] = v;
            phi_error[(i, j)] = e;
        }
        let (v, e) = pair(FdTarget::Dark { index: i })?;
        dark[i] = v;
        dark_error[i] = e;
    }

    Ok(GradientEstimate {
        phi,
        phi_error,
        dark: Some(dark),
        dark_error: Some(dark_error),
        method: GradientMethod::FiniteDifference,
        samples: None,
        truncation_mass_deficit: 0.0,
    })
}

/// Full finite-difference gradient for the Gaussian channel on a shared
/// quadrature box.
pub fn fd_gradients_gaussian(
    ch: &GaussianChannel,
    d: &FiniteDistribution,
) -> Result<GradientEstimate> {
    let spec = QuadratureSpec::for_channel(ch, d)?;
    let m = ch.outputs();
    let n = ch.inputs();
    let mut phi = Matrix::zeros(m, n);
    let mut phi_error = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let target = FdTarget::Phi { row: i, col: j };
            let x0 = ch.phi()[(i, j)];
            let h = default_fd_step(x0);
            let coarse = fd_mi_gaussian(ch, d, target, Some(h), &spec)?;
            let fine = fd_mi_gaussian(ch, d, target, Some(h / 2.0), &spec)?;
            phi[(i, j)] = fine;
            phi_error[(i, j)] = (coarse - fine).abs();
        }
    }
    Ok(GradientEstimate {
        phi,
        phi_error,
        dark: None,
        dark_error: None,
        method: GradientMethod::FiniteDifference,
        samples: None,
        truncation_mass_deficit: 0.0,
    })
}

/// Scalar counting-channel quantities computed by a standalone code path.
#[derive(Clone, Copy, Debug)]
pub struct ScalarChannelReport {
    /// I(X; Y) in nats.
    pub information: f64,
    /// dI/d(scale).
    pub phi: f64,
    /// dI/d(dark current).
    pub dark: f64,
    /// Output mass beyond the summation bound.
    pub tail_mass: f64,
}

/// Scalar specialization: one input, one output, rate `phi * x + dark`.
///
/// This function shares no code with the matrix implementation above: the
/// pmf comes from the multiplicative recurrence `p(y+1) = p(y) r/(y+1)`
/// rather than a log-gamma evaluation, posteriors are formed in direct
/// (not log) space, and summation is sequential. Agreement with the
/// matrix path on 1x1 instances is therefore a genuine cross-check, and
/// is enforced to near machine precision in the test suite.
pub fn scalar_poisson_report(
    phi: f64,
    dark: f64,
    d: &FiniteDistribution,
) -> Result<ScalarChannelReport> {
    if !phi.is_finite() || phi < 0.0 || !dark.is_finite() || dark < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "scalar channel needs finite nonnegative scale and dark current, got {phi} and {dark}"
        )));
    }
    if d.dim() != 1 {
        return Err(Error::ShapeMismatch {
            context: "scalar channel",
            expected: "1-dimensional input atoms".to_string(),
            actual: format!("{}", d.dim()),
        });
    }
    let atoms: Vec<f64> = d.atoms().iter().map(|a| a[0]).collect();
    if let Some(k) = atoms.iter().position(|&x| x < 0.0) {
        return Err(Error::Domain(format!(
            "counting channel input must be nonnegative; atom {k} is {}",
            atoms[k]
        )));
    }
    let rates: Vec<f64> = atoms.iter().map(|&x| phi * x + dark).collect();
    if let Some(k) = rates.iter().position(|&r| r <= 0.0) {
        return Err(Error::Domain(format!(
            "gradient needs strictly positive rates at every atom; \
             atom {k} produces rate 0 at output 0"
        )));
    }

    const TAIL: f64 = 1e-13;
    const HARD_CAP: u64 = 100_000;

    // pmf recurrences, advanced until every atom has absorbed all but
    // TAIL of its mass.
    let n_atoms = atoms.len();
    let mut pmf: Vec<f64> = rates.iter().map(|&r| (-r).exp()).collect();
    let mut cdf = pmf.clone();
    let mut information = KahanSum::new();
    let mut out_phi = KahanSum::new();
    let mut out_dark = KahanSum::new();

    // Input-side terms over the atoms.
    let mut term1_phi = 0.0f64;
    let mut term1_dark = 0.0f64;
    for k in 0..n_atoms {
        term1_phi += d.prob(k) * atoms[k] * rates[k].ln();
        term1_dark += d.prob(k) * rates[k].ln();
    }

    let mut y = 0u64;
    loop {
        // Posterior at this count, in direct space.
        let mut py = 0.0f64;
        for k in 0..n_atoms {
            py += d.prob(k) * pmf[k];
        }
        if py > 0.0 {
            let mut mean = 0.0f64;
            for k in 0..n_atoms {
                mean += d.prob(k) * pmf[k] * atoms[k];
            }
            mean /= py;
            let rho = phi * mean + dark;
            let log_rho = rho.ln();
            out_phi.add(py * mean * log_rho);
            out_dark.add(py * log_rho);
            for k in 0..n_atoms {
                if pmf[k] > 0.0 {
                    let joint = d.prob(k) * pmf[k];
                    information.add(joint * (pmf[k].ln() - py.ln()));
                }
            }
        }

        let worst_tail = cdf.iter().fold(0.0f64, |acc, &c| acc.max(1.0 - c));
        if worst_tail <= TAIL {
            break;
        }
        if y >= HARD_CAP {
            return Err(Error::GridTooLarge {
                cells: y as u128,
                cap: HARD_CAP as u128,
            });
        }
        y += 1;
        for k in 0..n_atoms {
            pmf[k] *= rates[k] / y as f64;
            cdf[k] += pmf[k];
        }
    }

    let mut tail_mass = 0.0f64;
    for k in 0..n_atoms {
        tail_mass += d.prob(k) * (1.0 - cdf[k]).max(0.0);
    }

    Ok(ScalarChannelReport {
        information: information.total(),
        phi: term1_phi - out_phi.total(),
        dark: term1_dark - out_dark.total(),
        tail_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use crate::information::mi_poisson_enum;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn scalar_instance_gradients_match_reference_values() {
        let (ch, d) = demo::scalar_binary();
        let g = poisson_gradients_enum_with_cap(&ch, &d, 1e-12, DEFAULT_CELL_CAP).unwrap();
        assert!((g.phi[(0, 0)] - demo::golden::SCALAR_BINARY_GRAD_PHI).abs() < 1e-10);
        assert!(
            (g.dark.as_ref().unwrap()[0] - demo::golden::SCALAR_BINARY_GRAD_DARK).abs() < 1e-10
        );
        assert_eq!(g.method, GradientMethod::Enumeration);
        assert!(g.truncation_mass_deficit <= 1e-12);
    }

    #[test]
    fn two_by_two_gradients_match_reference_values() {
        let (ch, d) = demo::two_by_two();
        let g = poisson_gradients_enum_with_cap(&ch, &d, 1e-12, DEFAULT_CELL_CAP).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = demo::golden::TWO_BY_TWO_GRAD_PHI[i][j];
                assert!(
                    (g.phi[(i, j)] - want).abs() < 1e-10,
                    "phi ({i},{j}): got {}, want {want}",
                    g.phi[(i, j)]
                );
            }
            let want = demo::golden::TWO_BY_TWO_GRAD_DARK[i];
            let got = g.dark.as_ref().unwrap()[i];
            assert!((got - want).abs() < 1e-10, "dark {i}: got {got}, want {want}");
        }
    }

    #[test]
    fn per_entry_truncation_bounds_cover_a_sharper_grid() {
        // Re-running on a much finer grid moves each entry by less than
        // the coarse run's claimed per-entry bound.
        let (ch, d) = demo::two_by_two();
        let coarse = poisson_gradients_enum_with_cap(&ch, &d, 1e-6, DEFAULT_CELL_CAP).unwrap();
        let fine = poisson_gradients_enum_with_cap(&ch, &d, 1e-14, DEFAULT_CELL_CAP).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let shift = (coarse.phi[(i, j)] - fine.phi[(i, j)]).abs();
                assert!(
                    shift <= coarse.phi_error[(i, j)] + 1e-15,
                    "entry ({i},{j}) moved {shift}, bound {}",
                    coarse.phi_error[(i, j)]
                );
            }
            let shift =
                (coarse.dark.as_ref().unwrap()[i] - fine.dark.as_ref().unwrap()[i]).abs();
            assert!(shift <= coarse.dark_error.as_ref().unwrap()[i] + 1e-15);
        }
    }

    #[test]
    fn standalone_scalar_path_agrees_with_matrix_path() {
        let (ch, d) = demo::scalar_binary();
        let scalar = scalar_poisson_report(1.0, 0.5, &d).unwrap();
        let matrix = poisson_gradients_enum_with_cap(&ch, &d, 1e-14, DEFAULT_CELL_CAP).unwrap();
        let mi = mi_poisson_enum(&ch, &d, 1e-14).unwrap();
        assert!((scalar.phi - matrix.phi[(0, 0)]).abs() < 1e-12);
        assert!((scalar.dark - matrix.dark.as_ref().unwrap()[0]).abs() < 1e-12);
        assert!((scalar.information - mi.value).abs() < 1e-12);
        assert!((scalar.information - demo::golden::SCALAR_BINARY_MI).abs() < 1e-11);
    }

    #[test]
    fn theorem_route_matches_finite_differences_on_the_scalar_instance() {
        let (ch, d) = demo::scalar_binary();
        let g = poisson_gradients_enum_with_cap(&ch, &d, 1e-12, DEFAULT_CELL_CAP).unwrap();
        let fd_phi = fd_mi_poisson(
            &ch,
            &d,
            FdTarget::Phi { row: 0, col: 0 },
            None,
            1e-12,
            DEFAULT_CELL_CAP,
        )
        .unwrap();
        let fd_dark = fd_mi_poisson(
            &ch,
            &d,
            FdTarget::Dark { index: 0 },
            None,
            1e-12,
            DEFAULT_CELL_CAP,
        )
        .unwrap();
        assert!(rel_err(g.phi[(0, 0)], fd_phi) < 1e-5);
        assert!(rel_err(g.dark.as_ref().unwrap()[0], fd_dark) < 1e-5);
    }

    #[test]
    fn theorem_route_matches_finite_differences_on_the_two_by_two_instance() {
        let (ch, d) = demo::two_by_two();
        let g = poisson_gradients_enum_with_cap(&ch, &d, 1e-12, DEFAULT_CELL_CAP).unwrap();
        let fd = fd_gradients_poisson(&ch, &d, 1e-12, DEFAULT_CELL_CAP).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    rel_err(g.phi[(i, j)], fd.phi[(i, j)]) < 1e-4,
                    "phi ({i},{j}): theorem {}, fd {}",
                    g.phi[(i, j)],
                    fd.phi[(i, j)]
                );
            }
            assert!(rel_err(g.dark.as_ref().unwrap()[i], fd.dark.as_ref().unwrap()[i]) < 1e-4);
        }
    }

    #[test]
    fn monte_carlo_gradients_agree_with_enumeration() {
        let (ch, d) = demo::two_by_two();
        let exact = poisson_gradients_enum(&ch, &d).unwrap();
        let mc =
            poisson_gradients_mc(&ch, &d, 200_000, &RngStream::new(9, 0)).unwrap();
        assert_eq!(mc.samples, Some(200_000));
        for i in 0..2 {
            for j in 0..2 {
                let se = mc.phi_error[(i, j)].max(1e-12);
                let diff = (mc.phi[(i, j)] - exact.phi[(i, j)]).abs();
                assert!(diff < 5.0 * se, "phi ({i},{j}): diff {diff}, se {se}");
            }
            let se = mc.dark_error.as_ref().unwrap()[i].max(1e-12);
            let diff = (mc.dark.as_ref().unwrap()[i] - exact.dark.as_ref().unwrap()[i]).abs();
            assert!(diff < 5.0 * se, "dark {i}: diff {diff}, se {se}");
        }
    }

    #[test]
    fn deterministic_input_has_exactly_zero_gradient() {
        // With a single atom the posterior is the prior regardless of y,
        // so the two gradient terms cancel up to the grid's truncation
        // deficit, which the tight epsilon below pins near 1e-12.
        let phi = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0]]).unwrap();
        let ch = PoissonChannel::new(phi, vec![0.1, 0.1]).unwrap();
        let d = FiniteDistribution::new(vec![vec![1.0, 2.0]], vec![1.0]).unwrap();
        let g = poisson_gradients_enum_with_cap(&ch, &d, 1e-13, DEFAULT_CELL_CAP).unwrap();
        assert!(g.phi.max_abs() < 1e-12, "residual {}", g.phi.max_abs());
        assert!(g.dark.unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dark_gradient_agrees_with_an_alternate_accumulation_order() {
        // The output-side term can be summed atom-first instead of
        // cell-first; the two orders must agree tightly.
        let (ch, d) = demo::two_by_two();
        let g = poisson_gradients_enum_with_cap(&ch, &d, 1e-12, DEFAULT_CELL_CAP).unwrap();
        let grid = OutputGrid::build(&ch, &d, 1e-12).unwrap();
        let tables = PmfTables::build(&ch, &d, &grid).unwrap();
        let rates: Vec<Vec<f64>> = d.atoms().iter().map(|a| ch.rates(a).unwrap()).collect();

        let m = ch.outputs();
        let mut term2 = vec![KahanSum::new(); m];
        for k in 0..d.len() {
            let mut cell = vec![0u64; m];
            let mut acc = vec![KahanSum::new(); m];
            for step in 0..grid.num_cells() {
                if step > 0 {
                    grid.advance(&mut cell);
                }
                let joint: Vec<f64> = (0..d.len())
                    .map(|kk| d.prob(kk).ln() + tables.loglik(kk, &cell))
                    .collect();
                let log_py = logsumexp(&joint);
                if log_py == f64::NEG_INFINITY {
                    continue;
                }
                let cond = (tables.loglik(k, &cell)).exp();
                if cond == 0.0 {
                    continue;
                }
                let weights: Vec<f64> =
                    joint.iter().map(|&jj| (jj - log_py).exp()).collect();
                for i in 0..m {
                    let rho: f64 = weights.iter().zip(&rates).map(|(w, r)| w * r[i]).sum();
                    acc[i].add(cond * rho.ln());
                }
            }
            for i in 0..m {
                term2[i].add(d.prob(k) * acc[i].total());
            }
        }

        for i in 0..m {
            let term1: f64 = (0..d.len()).map(|k| d.prob(k) * rates[k][i].ln()).sum();
            let alt = term1 - term2[i].total();
            assert!(
                (alt - g.dark.as_ref().unwrap()[i]).abs() < 1e-12,
                "dark {i}: alt {alt}, grid-first {}",
                g.dark.as_ref().unwrap()[i]
            );
        }
    }

    #[test]
    fn zero_rate_atoms_are_rejected_for_gradients() {
        let ch = PoissonChannel::new(Matrix::new(1, 1, vec![1.0]).unwrap(), vec![0.0]).unwrap();
        let d =
            FiniteDistribution::new(vec![vec![0.0], vec![2.0]], vec![0.5, 0.5]).unwrap();
        let err = poisson_gradients_enum(&ch, &d).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(err.to_string().contains("strictly positive rates"));
        let err = poisson_gradients_mc(&ch, &d, 100, &RngStream::new(1, 0)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn finite_differences_handle_a_dark_current_near_zero() {
        // dark = 1e-5 sits inside 2h of the boundary, forcing the
        // one-sided rule; it must still track the closed form.
        let ch =
            PoissonChannel::new(Matrix::new(1, 1, vec![1.0]).unwrap(), vec![1e-5]).unwrap();
        let d = demo::scalar_binary().1;
        let g = poisson_gradients_enum_with_cap(&ch, &d, 1e-12, DEFAULT_CELL_CAP).unwrap();
        let fd = fd_mi_poisson(
            &ch,
            &d,
            FdTarget::Dark { index: 0 },
            None,
            1e-12,
            DEFAULT_CELL_CAP,
        )
        .unwrap();
        assert!(
            (g.dark.as_ref().unwrap()[0] - fd).abs() < 1e-5,
            "closed form {}, one-sided fd {fd}",
            g.dark.as_ref().unwrap()[0]
        );
    }

    #[test]
    fn fd_rejects_out_of_range_targets_and_bad_steps() {
        let (ch, d) = demo::scalar_binary();
        assert!(matches!(
            fd_mi_poisson(
                &ch,
                &d,
                FdTarget::Phi { row: 1, col: 0 },
                None,
                1e-10,
                DEFAULT_CELL_CAP
            ),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            fd_mi_poisson(
                &ch,
                &d,
                FdTarget::Dark { index: 0 },
                Some(0.0),
                1e-10,
                DEFAULT_CELL_CAP
            ),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn gaussian_gradient_matches_quadrature_finite_differences() {
        let (ch, d) = demo::two_by_two_gaussian();
        let g = gaussian_gradient(&ch, &d, 200_000, &RngStream::new(21, 0)).unwrap();
        assert!(g.dark.is_none());
        let fd = fd_gradients_gaussian(&ch, &d).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let tol = (4.0 * g.phi_error[(i, j)]).max(2e-3);
                let diff = (g.phi[(i, j)] - fd.phi[(i, j)]).abs();
                assert!(
                    diff < tol,
                    "entry ({i},{j}): product {}, fd {}, tol {tol}",
                    g.phi[(i, j)],
                    fd.phi[(i, j)]
                );
            }
        }
    }

    #[test]
    fn zero_scaling_matrix_gives_zero_gaussian_gradient() {
        let ch = GaussianChannel::new(Matrix::zeros(2, 2)).unwrap();
        let d = demo::two_by_two().1;
        let g = gaussian_gradient(&ch, &d, 10_000, &RngStream::new(3, 0)).unwrap();
        assert_eq!(g.phi.max_abs(), 0.0);
        assert_eq!(g.method, GradientMethod::MmseProduct);
    }

    #[test]
    fn gaussian_fd_refuses_dark_targets() {
        let (ch, d) = demo::two_by_two_gaussian();
        let spec = QuadratureSpec::for_channel(&ch, &d).unwrap();
        let err = fd_mi_gaussian(&ch, &d, FdTarget::Dark { index: 0 }, None, &spec).unwrap_err();
        assert!(err.to_string().contains("no dark current"));
    }

    #[test]
    fn enumeration_gradients_are_thread_count_independent() {
        let (ch, d) = demo::two_by_two();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| poisson_gradients_enum(&ch, &d).unwrap())
        };
        let a = run(1);
        let b = run(4);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a.phi[(i, j)].to_bits(), b.phi[(i, j)].to_bits());
            }
            assert_eq!(
                a.dark.as_ref().unwrap()[i].to_bits(),
                b.dark.as_ref().unwrap()[i].to_bits()
            );
        }
    }

    #[test]
    fn monte_carlo_gradients_are_thread_count_independent() {
        let (ch, d) = demo::two_by_two();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                poisson_gradients_mc(&ch, &d, 70_000, &RngStream::new(5, 2)).unwrap()
            })
        };
        let a = run(1);
        let b = run(3);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a.phi[(i, j)].to_bits(), b.phi[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn oversized_grids_are_refused_with_the_feasibility_error() {
        let ch = PoissonChannel::new(Matrix::filled(3, 1, 30_000.0), vec![0.0; 3]).unwrap();
        let d = FiniteDistribution::new(vec![vec![1.0], vec![2.0]], vec![0.5, 0.5]).unwrap();
        let err = poisson_gradients_enum(&ch, &d).unwrap_err();
        assert!(matches!(err, Error::GridTooLarge { .. }));
        assert!(err.is_feasibility());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn scalar_instances() -> impl Strategy<Value = (f64, f64, Vec<f64>, Vec<f64>)> {
            (
                0.3f64..2.0,
                0.05f64..1.0,
                proptest::collection::vec(0.2f64..3.0, 2..4),
            )
                .prop_flat_map(|(phi, dark, xs)| {
                    let len = xs.len();
                    (
                        Just(phi),
                        Just(dark),
                        Just(xs),
                        proptest::collection::vec(0.05f64..1.0, len),
                    )
                })
                .prop_map(|(phi, dark, mut xs, raw_p)| {
                    // Separate the atoms so the distinctness check passes.
                    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    for i in 1..xs.len() {
                        if xs[i] - xs[i - 1] < 1e-3 {
                            xs[i] = xs[i - 1] + 1e-3;
                        }
                    }
                    let total: f64 = raw_p.iter().sum();
                    let probs: Vec<f64> = raw_p.iter().map(|p| p / total).collect();
                    (phi, dark, xs, probs)
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn scalar_and_matrix_paths_agree_on_random_instances(
                (phi, dark, xs, probs) in scalar_instances()
            ) {
                let atoms: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
                let d = FiniteDistribution::new(atoms, probs).unwrap();
                let ch = PoissonChannel::new(
                    Matrix::new(1, 1, vec![phi]).unwrap(),
                    vec![dark],
                )
                .unwrap();
                let scalar = scalar_poisson_report(phi, dark, &d).unwrap();
                let matrix =
                    poisson_gradients_enum_with_cap(&ch, &d, 1e-13, DEFAULT_CELL_CAP).unwrap();
                prop_assert!((scalar.phi - matrix.phi[(0, 0)]).abs() < 1e-11);
                prop_assert!((scalar.dark - matrix.dark.as_ref().unwrap()[0]).abs() < 1e-11);
            }

            #[test]
            fn finite_differences_track_the_closed_form_on_random_instances(
                (phi, dark, xs, probs) in scalar_instances()
            ) {
                let atoms: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
                let d = FiniteDistribution::new(atoms, probs).unwrap();
                let ch = PoissonChannel::new(
                    Matrix::new(1, 1, vec![phi]).unwrap(),
                    vec![dark],
                )
                .unwrap();
                let g = poisson_gradients_enum_with_cap(&ch, &d, 1e-12, DEFAULT_CELL_CAP)
                    .unwrap();
                let fd = fd_mi_poisson(
                    &ch,
                    &d,
                    FdTarget::Phi { row: 0, col: 0 },
                    None,
                    1e-12,
                    DEFAULT_CELL_CAP,
                )
                .unwrap();
                let g0 = g.phi[(0, 0)];
                prop_assert!(
                    (g0 - fd).abs() < 1e-6 + 1e-3 * g0.abs(),
                    "closed form {g0}, fd {fd}"
                );
            }
        }
    }
}
