//! The gradient-divergence equivalence: the expected matrix divergence
//! between the input and its conditional-mean estimate equals the
//! mutual-information gradient with respect to the scaling matrix.
//!
//! The two sides are computed by disjoint code: the gradient side by the
//! two-term expectations in the gradients module, the divergence side by
//! averaging `D(X, E[X|Y])` over the joint distribution using only the
//! generator's `value`/`derivative` closures. Their agreement at
//! near-rounding tolerance is the strongest internal evidence this crate
//! produces, because almost every module participates in it.

use rayon::prelude::*;

use crate::bregman::matrix::{gaussian_generator, matrix_divergence, poisson_generator};
use crate::channels::{gaussian_sample, GaussianChannel, OutputGrid, PoissonChannel};
use crate::error::{Error, Result};
use crate::inference::{conditional_mean, gaussian_posterior};
use crate::information::{index_blocks, PmfTables};
use crate::input_model::FiniteDistribution;
use crate::numerics::{logsumexp, KahanSum, Matrix, RngStream};

/// The scaling-matrix gradient computed as `E[D(X, E[X|Y])]` over a
/// truncated output grid, already transposed into gradient layout.
///
/// The counting-channel generator pairs input components with outputs
/// (an n x m matrix); the gradient pairs outputs with inputs. The
/// transpose at the end reconciles the two conventions.
pub fn poisson_phi_gradient_via_divergence(
    ch: &PoissonChannel,
    d: &FiniteDistribution,
    epsilon: f64,
    cell_cap: u128,
) -> Result<Matrix> {
    let grid = OutputGrid::build(ch, d, epsilon)?;
    if grid.num_cells() > cell_cap {
        return Err(Error::GridTooLarge {
            cells: grid.num_cells(),
            cap: cell_cap,
        });
    }
    let generator = poisson_generator(ch);
    let tables = PmfTables::build(ch, d, &grid)?;
    let log_probs: Vec<f64> = d.probs().iter().map(|&p| p.ln()).collect();
    let n_atoms = d.len();
    let n = ch.inputs();
    let m = ch.outputs();

    const BLOCK: u64 = 1 << 14;
    let blocks = index_blocks(grid.num_cells(), BLOCK);

    let partials: Result<Vec<Vec<KahanSum>>> = blocks
        .par_iter()
        .map(|&(start, len)| {
            let mut acc = vec![KahanSum::new(); n * m];
            let mut cell = vec![0u64; m];
            grid.decode(start, &mut cell);
            let mut joint = vec![0.0f64; n_atoms];
            for step in 0..len {
                if step > 0 {
                    grid.advance(&mut cell);
                }
                for k in 0..n_atoms {
                    joint[k] = log_probs[k] + tables.loglik(k, &cell);
                }
                let log_py = logsumexp(&joint);
                if log_py == f64::NEG_INFINITY {
                    continue;
                }
                let mut mean = vec![0.0f64; n];
                for (k, &j) in joint.iter().enumerate() {
                    if j == f64::NEG_INFINITY {
                        continue;
                    }
                    let w = (j - log_py).exp();
                    for (mv, &xj) in mean.iter_mut().zip(d.atom(k)) {
                        *mv += w * xj;
                    }
                }
                for (k, &j) in joint.iter().enumerate() {
                    if j == f64::NEG_INFINITY {
                        continue;
                    }
                    let div = matrix_divergence(&generator, d.atom(k), &mean)?;
                    let p = j.exp();
                    for r in 0..n {
                        for c in 0..m {
                            acc[r * m + c].add(p * div[(r, c)]);
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect();

    let mut total = vec![KahanSum::new(); n * m];
    for block in partials? {
        for (acc, part) in total.iter_mut().zip(&block) {
            acc.merge(*part);
        }
    }

    // Transpose from generator layout (input, output) to gradient
    // layout (output, input).
    let mut out = Matrix::zeros(m, n);
    for r in 0..n {
        for c in 0..m {
            out[(c, r)] = total[r * m + c].total();
        }
    }
    Ok(out)
}

/// One Monte Carlo pass through the Gaussian channel that exercises both
/// routes to the gradient on the same samples.
#[derive(Clone, Debug)]
pub struct GaussianDualCheck {
    /// `E[D(X, E[X|Y])]` accumulated through the generator closures.
    pub divergence_route: Matrix,
    /// Scaling matrix times the error covariance accumulated directly.
    pub product_route: Matrix,
    /// Largest per-sample gap between the generator divergence and its
    /// closed form `phi (x - m)(x - m)^T`. Pure algebra says zero; the
    /// measured value is rounding noise and is asserted tiny downstream.
    pub max_identity_gap: f64,
    /// Per-entry Monte Carlo standard error of either route's mean (the
    /// two routes share samples, so one error matrix covers both).
    pub std_err: Matrix,
    pub samples: u64,
}

/// Runs the Gaussian dual check: per sample, the divergence
/// `D(x, E[x|y])` is evaluated through the generator and compared with
/// the closed form, while both gradient routes accumulate.
pub fn gaussian_equivalence_mc(
    ch: &GaussianChannel,
    d: &FiniteDistribution,
    samples: u64,
    rng: &RngStream,
) -> Result<GaussianDualCheck> {
    if samples == 0 {
        return Err(Error::InvalidParameter(
            "Monte Carlo sample count must be positive".to_string(),
        ));
    }
    let generator = gaussian_generator(ch);
    let m = ch.outputs();
    let n = ch.inputs();

    const BLOCK: u64 = 1 << 16;
    let blocks = index_blocks(samples as u128, BLOCK);

    struct BlockOut {
        div_sum: Vec<f64>,
        div_sq_sum: Vec<f64>,
        err_sum: Vec<f64>,
        max_gap: f64,
    }

    let partials: Result<Vec<BlockOut>> = blocks
        .par_iter()
        .map(|&(start, len)| {
            let block_idx = start / BLOCK as u128;
            let mut stream = rng.substream(block_idx as u64);
            let mut div_sum = vec![0.0f64; m * n];
            let mut div_sq_sum = vec![0.0f64; m * n];
            let mut err_sum = vec![0.0f64; n * n];
            let mut max_gap = 0.0f64;
            for _ in 0..len {
                let k = d.sample_index(&mut stream);
                let x = d.atom(k);
                let y = gaussian_sample(ch, x, &mut stream)?;
                let post = gaussian_posterior(ch, d, &y)?;
                let mean = conditional_mean(d, &post)?;
                let h: Vec<f64> = x.iter().zip(&mean).map(|(&a, &b)| a - b).collect();

                let div = matrix_divergence(&generator, x, &mean)?;
                let closed = ch.phi().matmul(&Matrix::outer(&h, &h))?;
                max_gap = max_gap.max(div.sub(&closed)?.max_abs());

                for i in 0..m {
                    for j in 0..n {
                        let v = div[(i, j)];
                        div_sum[i * n + j] += v;
                        div_sq_sum[i * n + j] += v * v;
                    }
                }
                for a in 0..n {
                    for b in 0..n {
                        err_sum[a * n + b] += h[a] * h[b];
                    }
                }
            }
            Ok(BlockOut {
                div_sum,
                div_sq_sum,
                err_sum,
                max_gap,
            })
        })
        .collect();

    let mut div_total = vec![KahanSum::new(); m * n];
    let mut div_sq_total = vec![KahanSum::new(); m * n];
    let mut err_total = vec![KahanSum::new(); n * n];
    let mut max_gap = 0.0f64;
    for block in partials? {
        for (acc, v) in div_total.iter_mut().zip(&block.div_sum) {
            acc.add(*v);
        }
        for (acc, v) in div_sq_total.iter_mut().zip(&block.div_sq_sum) {
            acc.add(*v);
        }
        for (acc, v) in err_total.iter_mut().zip(&block.err_sum) {
            acc.add(*v);
        }
        max_gap = max_gap.max(block.max_gap);
    }

    let nf = samples as f64;
    let mut divergence_route = Matrix::zeros(m, n);
    let mut std_err = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let mean = div_total[i * n + j].total() / nf;
            divergence_route[(i, j)] = mean;
            let var = (div_sq_total[i * n + j].total() / nf - mean * mean).max(0.0);
            std_err[(i, j)] = (var / nf).sqrt();
        }
    }
    let mut err_cov = Matrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            err_cov[(a, b)] = err_total[a * n + b].total() / nf;
        }
    }
    let product_route = ch.phi().matmul(&err_cov)?;

    Ok(GaussianDualCheck {
        divergence_route,
        product_route,
        max_identity_gap: max_gap,
        std_err,
        samples,
    })
}
