//! Mutual information I(X; Y) in nats.
//!
//! Three routes, each with an explicit error accounting:
//!
//! * exact enumeration over a truncated Poisson output grid, with a
//!   certified truncation bound;
//! * tensor-grid quadrature for Gaussian channels with at most two
//!   outputs, with a tail bound and a refinement-difference estimate;
//! * Monte Carlo for either channel, with per-run standard errors, using
//!   exact finite-mixture marginals per sample (no density estimation).
//!
//! Logarithms are natural throughout; all values are in nats.

use crate::channels::{
    gaussian_log_pdf, gaussian_sample, poisson_log_pmf, poisson_sample, GaussianChannel,
    OutputGrid, PoissonChannel,
};
use crate::error::{Error, Result};
use crate::input_model::FiniteDistribution;
use crate::numerics::{logsumexp, KahanSum, RngStream};
use rayon::prelude::*;
use statrs::function::erf::erfc;

/// Default cap on enumeration cells. Above this the enumeration routines
/// refuse and suggest Monte Carlo.
pub const DEFAULT_CELL_CAP: u128 = 100_000_000;

/// How an [`MiEstimate`] was computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MiMethod {
    Enumeration,
    Quadrature,
    MonteCarlo,
}

impl MiMethod {
    pub fn name(self) -> &'static str {
        match self {
            MiMethod::Enumeration => "enumeration",
            MiMethod::Quadrature => "quadrature",
            MiMethod::MonteCarlo => "monte_carlo",
        }
    }
}

/// A mutual information value with its error accounting.
#[derive(Clone, Debug)]
pub struct MiEstimate {
    /// I(X; Y) in nats.
    pub value: f64,
    pub method: MiMethod,
    /// Deterministic truncation/discretization bound for enumeration and
    /// quadrature; one standard error for Monte Carlo.
    pub error_bound: f64,
    /// Output mass missed by the truncated enumeration or quadrature box
    /// (0 for Monte Carlo).
    pub truncation_mass_deficit: f64,
}

/// Per-atom, per-coordinate log pmf lookup tables over a grid.
///
/// `ln P(y | x_k)` factorizes over coordinates, so a table of length
/// `bound_i + 1` per (atom, coordinate) turns each pmf evaluation during
/// enumeration into m additions.
pub(crate) struct PmfTables {
    // terms[k][i][y] = log pmf of coordinate i at count y under atom k
    terms: Vec<Vec<Vec<f64>>>,
}

impl PmfTables {
    pub(crate) fn build(
        ch: &PoissonChannel,
        d: &FiniteDistribution,
        grid: &OutputGrid,
    ) -> Result<Self> {
        let mut terms = Vec::with_capacity(d.len());
        for atom in d.atoms() {
            let rates = ch.rates(atom)?;
            let per_atom: Vec<Vec<f64>> = rates
                .iter()
                .zip(grid.bounds())
                .map(|(&r, &b)| {
                    (0..=b)
                        .map(|y| single_poisson_log_pmf(r, y))
                        .collect::<Vec<f64>>()
                })
                .collect();
            terms.push(per_atom);
        }
        Ok(PmfTables { terms })
    }

    /// `ln P(y = cell | x_k)`.
    pub(crate) fn loglik(&self, k: usize, cell: &[u64]) -> f64 {
        self.terms[k]
            .iter()
            .zip(cell)
            .map(|(tab, &y)| tab[y as usize])
            .sum()
    }
}

fn single_poisson_log_pmf(r: f64, y: u64) -> f64 {
    if r == 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    // ln(0!) = ln(1!) = 0 exactly; the library ln_gamma leaves ~1e-16
    // residue at 1 which would break exact small-count identities.
    let yf = y as f64;
    if y <= 1 {
        return yf * r.ln() - r;
    }
    yf * r.ln() - r - statrs::function::gamma::ln_gamma(yf + 1.0)
}

/// Splits `total` items into fixed-size blocks `(start, len)`. Block
/// boundaries depend only on `total`, never on the thread count, so
/// parallel folds done in block order are deterministic.
pub(crate) fn index_blocks(total: u128, block: u64) -> Vec<(u128, u64)> {
    let mut out = Vec::new();
    let mut start = 0u128;
    while start < total {
        let len = ((total - start).min(block as u128)) as u64;
        out.push((start, len));
        start += len as u128;
    }
    out
}

struct MiBlockSums {
    value: KahanSum,
    mass: KahanSum,
    boundary_ratio_max: f64,
}

/// Exact mutual information over a caller-supplied output grid.
///
/// Useful when several evaluations must share one truncation (finite
/// differences, design line searches); most callers want
/// [`mi_poisson_enum`], which builds the grid itself.
pub fn mi_poisson_on_grid(
    ch: &PoissonChannel,
    d: &FiniteDistribution,
    grid: &OutputGrid,
) -> Result<MiEstimate> {
    let tables = PmfTables::build(ch, d, grid)?;
    let log_probs: Vec<f64> = d.probs().iter().map(|&p| p.ln()).collect();
    let n_atoms = d.len();
    let m = ch.outputs();

    const BLOCK: u64 = 1 << 14;
    let blocks = index_blocks(grid.num_cells(), BLOCK);

    let partials: Vec<MiBlockSums> = blocks
        .par_iter()
        .map(|&(start, len)| {
            let mut sums = MiBlockSums {
                value: KahanSum::new(),
                mass: KahanSum::new(),
                boundary_ratio_max: 0.0,
            };
            let mut cell = vec![0u64; m];
            grid.decode(start, &mut cell);
            let mut loglik = vec![0.0f64; n_atoms];
            let mut joint = vec![0.0f64; n_atoms];
            for step in 0..len {
                if step > 0 {
                    grid.advance(&mut cell);
                }
                for k in 0..n_atoms {
                    loglik[k] = tables.loglik(k, &cell);
                    joint[k] = log_probs[k] + loglik[k];
                }
                let log_py = logsumexp(&joint);
                if log_py == f64::NEG_INFINITY {
                    continue; // cell unreachable under every atom
                }
                sums.mass.add(log_py.exp());
                for k in 0..n_atoms {
                    if joint[k] == f64::NEG_INFINITY {
                        continue;
                    }
                    let ratio = loglik[k] - log_py;
                    sums.value.add(joint[k].exp() * ratio);
                }
                if grid.is_boundary(&cell) {
                    for k in 0..n_atoms {
                        if joint[k] > f64::NEG_INFINITY {
                            sums.boundary_ratio_max =
                                sums.boundary_ratio_max.max((loglik[k] - log_py).abs());
                        }
                    }
                }
            }
            sums
        })
        .collect();

    let mut value = KahanSum::new();
    let mut boundary_max = 0.0f64;
    for p in &partials {
        value.merge(p.value);
        boundary_max = boundary_max.max(p.boundary_ratio_max);
    }

    let deficit = grid.deficit();
    Ok(MiEstimate {
        value: value.total(),
        method: MiMethod::Enumeration,
        error_bound: deficit * boundary_max,
        truncation_mass_deficit: deficit,
    })
}

/// Exact mutual information for the Poisson channel by enumerating a
/// truncated output grid capturing mass ≥ 1 − ε.
///
/// Errors if the grid would exceed `cell_cap` cells (suggesting Monte
/// Carlo); [`mi_poisson_enum`] applies [`DEFAULT_CELL_CAP`].
pub fn mi_poisson_enum_with_cap(
    ch: &PoissonChannel,
    d: &FiniteDistribution,
    epsilon: f64,
    cell_cap: u128,
) -> Result<MiEstimate> {
    let grid = OutputGrid::build(ch, d, epsilon)?;
    let cells = grid.num_cells();
    if cells > cell_cap {
        return Err(Error::GridTooLarge {
            cells,
            cap: cell_cap,
        });
    }
    mi_poisson_on_grid(ch, d, &grid)
}

/// [`mi_poisson_enum_with_cap`] with the default cell cap.
pub fn mi_poisson_enum(
    ch: &PoissonChannel,
    d: &FiniteDistribution,
    epsilon: f64,
) -> Result<MiEstimate> {
    mi_poisson_enum_with_cap(ch, d, epsilon, DEFAULT_CELL_CAP)
}

/// Monte Carlo mutual information for the Poisson channel.
///
/// Each sample contributes `ln P(y|x) − ln P(y)` with the marginal
/// evaluated exactly over the finite mixture, so the estimator is unbiased
/// and its only error is sampling noise (reported as one standard error).
pub fn mi_poisson_mc(
    ch: &PoissonChannel,
    d: &FiniteDistribution,
    budget: u64,
    rng: &RngStream,
) -> Result<MiEstimate> {
    mc_information(budget, rng, d, |stream, k| {
        let y = poisson_sample(ch, d.atom(k), stream)?;
        let loglik: Result<Vec<f64>> = d
            .atoms()
            .iter()
            .map(|atom| poisson_log_pmf(ch, atom, &y))
            .collect();
        loglik
    })
}

/// Monte Carlo mutual information for the Gaussian channel.
pub fn mi_gaussian_mc(
    ch: &GaussianChannel,
    d: &FiniteDistribution,
    budget: u64,
    rng: &RngStream,
) -> Result<MiEstimate> {
    mc_information(budget, rng, d, |stream, k| {
        let y = gaussian_sample(ch, d.atom(k), stream)?;
        let loglik: Result<Vec<f64>> = d
            .atoms()
            .iter()
            .map(|atom| gaussian_log_pdf(ch, atom, &y))
            .collect();
        loglik
    })
}

/// Shared MC core: draw an atom, let `likelihoods` draw y and return the
/// per-atom log-likelihood vector, accumulate `ln P(y|x) − ln P(y)`.
fn mc_information(
    budget: u64,
    rng: &RngStream,
    d: &FiniteDistribution,
    likelihoods: impl Fn(&mut RngStream, usize) -> Result<Vec<f64>> + Sync,
) -> Result<MiEstimate> {
    if budget == 0 {
        return Err(Error::InvalidParameter(
            "Monte Carlo budget must be positive".to_string(),
        ));
    }
    const BLOCK: u64 = 1 << 16;
    let blocks = index_blocks(budget as u128, BLOCK);
    let log_probs: Vec<f64> = d.probs().iter().map(|&p| p.ln()).collect();

    let partials: Result<Vec<(f64, f64)>> = blocks
        .par_iter()
        .map(|&(start, len)| {
            let block_idx = start / BLOCK as u128;
            let mut stream = rng.substream(block_idx as u64);
            let (mut sum, mut sumsq) = (0.0, 0.0);
            for _ in 0..len {
                let k = d.sample_index(&mut stream);
                let loglik = likelihoods(&mut stream, k)?;
                let joint: Vec<f64> = log_probs
                    .iter()
                    .zip(&loglik)
                    .map(|(&lp, &ll)| lp + ll)
                    .collect();
                let log_py = logsumexp(&joint);
                let contrib = loglik[k] - log_py;
                sum += contrib;
                sumsq += contrib * contrib;
            }
            Ok((sum, sumsq))
        })
        .collect();

    let mut sum = KahanSum::new();
    let mut sumsq = KahanSum::new();
    for &(s, sq) in partials?.iter() {
        sum.add(s);
        sumsq.add(sq);
    }
    let nf = budget as f64;
    let mean = sum.total() / nf;
    let var = (sumsq.total() / nf - mean * mean).max(0.0);
    let se = (var / nf).sqrt();
    Ok(MiEstimate {
        value: mean,
        method: MiMethod::MonteCarlo,
        error_bound: se,
        truncation_mass_deficit: 0.0,
    })
}

/// Integration box and step for Gaussian quadrature.
///
/// Kept explicit so that several evaluations (finite differences, line
/// searches) can share the exact same nodes; discretization error then
/// cancels in differences instead of polluting them.
#[derive(Clone, Debug)]
pub struct QuadratureSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub step: f64,
}

/// Margin in noise standard deviations around the extreme channel means.
const QUAD_MARGIN: f64 = 8.5;
/// Node spacing. The integrands decay like Gaussians, for which the
/// midpoint rule at this spacing is accurate far past double precision.
const QUAD_STEP: f64 = 0.2;

impl QuadratureSpec {
    /// Box covering every atom's mean output within [`QUAD_MARGIN`]
    /// standard deviations, stepped at [`QUAD_STEP`].
    pub fn for_channel(ch: &GaussianChannel, d: &FiniteDistribution) -> Result<Self> {
        if ch.outputs() > 2 {
            return Err(Error::InvalidParameter(format!(
                "quadrature supports at most 2 output dimensions, channel has {}",
                ch.outputs()
            )));
        }
        let m = ch.outputs();
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for atom in d.atoms() {
            let mu = ch.mean_output(atom)?;
            for i in 0..m {
                lo[i] = lo[i].min(mu[i] - QUAD_MARGIN);
                hi[i] = hi[i].max(mu[i] + QUAD_MARGIN);
            }
        }
        Ok(QuadratureSpec {
            lo,
            hi,
            step: QUAD_STEP,
        })
    }

    fn node_counts(&self, step: f64) -> Vec<usize> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| ((h - l) / step).ceil().max(1.0) as usize)
            .collect()
    }
}

/// Mutual information for the Gaussian channel by midpoint quadrature on
/// a tensor grid (m ≤ 2).
///
/// The reported error bound is the mixture mass outside the box times the
/// largest absolute log-ratio seen on the box edge, plus the difference
/// against a pass at twice the step.
pub fn mi_gaussian_quadrature(
    ch: &GaussianChannel,
    d: &FiniteDistribution,
    spec: &QuadratureSpec,
) -> Result<MiEstimate> {
    if ch.outputs() > 2 {
        return Err(Error::InvalidParameter(format!(
            "quadrature supports at most 2 output dimensions, channel has {}",
            ch.outputs()
        )));
    }
    if spec.lo.len() != ch.outputs() || spec.hi.len() != ch.outputs() {
        return Err(Error::ShapeMismatch {
            context: "quadrature spec",
            expected: format!("box of dimension {}", ch.outputs()),
            actual: format!("{}x{}", spec.lo.len(), spec.hi.len()),
        });
    }
    if !(spec.step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "quadrature step must be positive, got {}",
            spec.step
        )));
    }

    let (fine, edge_ratio_max) = quadrature_pass(ch, d, spec, spec.step)?;
    let (coarse, _) = quadrature_pass(ch, d, spec, spec.step * 2.0)?;

    // Mass of the output mixture outside the box: per-coordinate Gaussian
    // tails, union-bounded over coordinates, averaged over atoms.
    let mut deficit = 0.0;
    for (atom, &p) in d.atoms().iter().zip(d.probs()) {
        let mu = ch.mean_output(atom)?;
        let mut outside = 0.0;
        for i in 0..ch.outputs() {
            outside += normal_upper_tail(spec.hi[i] - mu[i]);
            outside += normal_upper_tail(mu[i] - spec.lo[i]);
        }
        deficit += p * outside.min(1.0);
    }

    Ok(MiEstimate {
        value: fine,
        method: MiMethod::Quadrature,
        error_bound: deficit * edge_ratio_max + (fine - coarse).abs(),
        truncation_mass_deficit: deficit,
    })
}

/// P(Z > z) for standard normal Z.
fn normal_upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

fn quadrature_pass(
    ch: &GaussianChannel,
    d: &FiniteDistribution,
    spec: &QuadratureSpec,
    step: f64,
) -> Result<(f64, f64)> {
    let m = ch.outputs();
    let counts = spec.node_counts(step);
    let total: u128 = counts.iter().map(|&c| c as u128).product();
    let log_probs: Vec<f64> = d.probs().iter().map(|&p| p.ln()).collect();
    let weight = step.powi(m as i32);

    const BLOCK: u64 = 1 << 12;
    let blocks = index_blocks(total, BLOCK);

    let partials: Result<Vec<(KahanSum, f64)>> = blocks
        .par_iter()
        .map(|&(start, len)| {
            let mut acc = KahanSum::new();
            let mut edge_max = 0.0f64;
            let mut y = vec![0.0f64; m];
            let mut idx = vec![0usize; m];
            for offset in 0..len as u128 {
                let mut linear = start + offset;
                for i in (0..m).rev() {
                    idx[i] = (linear % counts[i] as u128) as usize;
                    linear /= counts[i] as u128;
                }
                let mut on_edge = false;
                for i in 0..m {
                    y[i] = spec.lo[i] + (idx[i] as f64 + 0.5) * step;
                    on_edge |= idx[i] == 0 || idx[i] + 1 == counts[i];
                }
                let loglik: Result<Vec<f64>> = d
                    .atoms()
                    .iter()
                    .map(|atom| gaussian_log_pdf(ch, atom, &y))
                    .collect();
                let loglik = loglik?;
                let joint: Vec<f64> = log_probs
                    .iter()
                    .zip(&loglik)
                    .map(|(&lp, &ll)| lp + ll)
                    .collect();
                let log_py = logsumexp(&joint);
                for k in 0..d.len() {
                    if joint[k] == f64::NEG_INFINITY {
                        continue;
                    }
                    let ratio = loglik[k] - log_py;
                    acc.add(joint[k].exp() * ratio);
                    if on_edge {
                        edge_max = edge_max.max(ratio.abs());
                    }
                }
            }
            Ok((acc, edge_max))
        })
        .collect();

    let mut value = KahanSum::new();
    let mut edge_max = 0.0f64;
    for (acc, e) in partials? {
        value.merge(acc);
        edge_max = edge_max.max(e);
    }
    Ok((weight * value.total(), edge_max))
}

/// Method selector for [`mi_gaussian`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GaussianMiMethod {
    /// Tensor-grid quadrature (outputs m ≤ 2); ignores budget and rng.
    Quadrature,
    /// Monte Carlo with the given budget and stream.
    MonteCarlo,
}

/// Mutual information for the Gaussian channel by the requested method.
pub fn mi_gaussian(
    ch: &GaussianChannel,
    d: &FiniteDistribution,
    method: GaussianMiMethod,
    budget: u64,
    rng: &RngStream,
) -> Result<MiEstimate> {
    match method {
        GaussianMiMethod::Quadrature => {
            let spec = QuadratureSpec::for_channel(ch, d)?;
            mi_gaussian_quadrature(ch, d, &spec)
        }
        GaussianMiMethod::MonteCarlo => mi_gaussian_mc(ch, d, budget, rng),
    }
}
