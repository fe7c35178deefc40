//! Projected-gradient design of the scaling matrix.
//!
//! Given a fixed input prior and dark current, the information a counting
//! channel carries is a differentiable function of its scaling matrix, and
//! the gradients module computes that derivative exactly. This module
//! climbs it: project the matrix onto a constraint set, step along the
//! information gradient, backtrack until the information actually rose,
//! repeat. The binary designs the relaxation stands in for are recovered
//! at the end by thresholding, with the cost of rounding reported rather
//! than hidden.

use crate::channels::PoissonChannel;
use crate::error::{Error, Result};
use crate::gradients::{poisson_gradients_enum_with_cap, poisson_gradients_mc};
use crate::information::{mi_poisson_enum_with_cap, mi_poisson_mc};
use crate::input_model::FiniteDistribution;
use crate::numerics::{Matrix, RngStream};

/// Feasible sets for the scaling matrix, all with cheap exact Euclidean
/// projections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constraint {
    /// Every entry in [0, 1]: the continuous relaxation of a binary
    /// selection matrix.
    Box01,
    /// Every entry nonnegative.
    Nonneg,
    /// Rows nonnegative and each summing to the given budget.
    RowSum(f64),
}

impl Constraint {
    /// Rejects constraint parameters that describe an empty or malformed
    /// feasible set.
    pub fn validate(&self) -> Result<()> {
        if let Constraint::RowSum(c) = self {
            if !c.is_finite() || *c < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "row-sum budget must be finite and nonnegative, got {c}"
                )));
            }
        }
        Ok(())
    }

    /// Euclidean projection onto the feasible set, entrywise for the box
    /// constraints and row by row for the sum constraint.
    pub fn project(&self, m: &Matrix) -> Result<Matrix> {
        self.validate()?;
        let (rows, cols) = m.shape();
        Ok(match self {
            Constraint::Box01 => m.map(|v| v.clamp(0.0, 1.0)),
            Constraint::Nonneg => m.map(|v| v.max(0.0)),
            Constraint::RowSum(c) => {
                let mut out = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let row: Vec<f64> = (0..cols).map(|j| m[(r, j)]).collect();
                    let proj = project_row_onto_scaled_simplex(&row, *c);
                    for (j, v) in proj.into_iter().enumerate() {
                        out[(r, j)] = v;
                    }
                }
                out
            }
        })
    }

    /// Fixed-point residual `|| project(phi + grad) - phi ||_F`: zero
    /// exactly at constrained stationary points, so it doubles as the
    /// convergence certificate reported in the trace.
    pub fn projected_residual(&self, phi: &Matrix, grad: &Matrix) -> Result<f64> {
        let stepped = self.project(&phi.add(grad)?)?;
        Ok(stepped.sub(phi)?.frobenius_norm())
    }
}

/// Euclidean projection of one row onto `{ w >= 0, sum w = c }`, by the
/// usual sort-and-threshold construction: after sorting descending, the
/// active support is the longest prefix whose running average leaves every
/// member positive after the common shift.
fn project_row_onto_scaled_simplex(u: &[f64], c: f64) -> Vec<f64> {
    let mut sorted = u.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cum = 0.0;
    let mut tau = 0.0;
    let mut support = 0usize;
    for (k, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - c) / (k as f64 + 1.0);
        if v - t > 0.0 {
            support = k + 1;
            tau = t;
        }
    }
    if support == 0 {
        // Only reachable with a zero budget: the feasible set is the
        // single point at the origin.
        return vec![0.0; u.len()];
    }
    u.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// A scaling-matrix design task: what to sense (`prior`), the fixed
/// hardware floor (`dark`), where the matrix may live (`constraint`), and
/// where the ascent starts (`init`).
#[derive(Clone, Debug)]
pub struct DesignProblem {
    prior: FiniteDistribution,
    dark: Vec<f64>,
    constraint: Constraint,
    init: Matrix,
}

impl DesignProblem {
    /// Validates shapes and positivity. The dark current must be strictly
    /// positive so every atom keeps strictly positive rates throughout the
    /// ascent, no matter how the constraint zeroes rows.
    pub fn new(
        prior: FiniteDistribution,
        dark: Vec<f64>,
        constraint: Constraint,
        init: Matrix,
    ) -> Result<Self> {
        constraint.validate()?;
        let (m, n) = init.shape();
        if n != prior.dim() {
            return Err(Error::ShapeMismatch {
                context: "design initial matrix",
                expected: format!("{} columns to match the prior", prior.dim()),
                actual: format!("{n}"),
            });
        }
        if dark.len() != m {
            return Err(Error::ShapeMismatch {
                context: "design dark current",
                expected: format!("length {m} to match the initial matrix"),
                actual: format!("{}", dark.len()),
            });
        }
        if let Some(bad) = dark.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "design dark current must be strictly positive, got {bad}"
            )));
        }
        Ok(DesignProblem {
            prior,
            dark,
            constraint,
            init,
        })
    }

    /// A problem whose starting matrix is drawn uniformly from the unit
    /// box and projected onto the constraint. Identical seeds give
    /// identical starts.
    pub fn seeded(
        prior: FiniteDistribution,
        m: usize,
        dark: Vec<f64>,
        constraint: Constraint,
        seed: u64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter(
                "design needs at least one output row".to_string(),
            ));
        }
        let n = prior.dim();
        let mut stream = RngStream::new(seed, 0);
        let mut init = Matrix::zeros(m, n);
        for r in 0..m {
            for c in 0..n {
                init[(r, c)] = stream.uniform();
            }
        }
        let init = constraint.project(&init)?;
        DesignProblem::new(prior, dark, constraint, init)
    }

    pub fn prior(&self) -> &FiniteDistribution {
        &self.prior
    }

    pub fn dark(&self) -> &[f64] {
        &self.dark
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn init(&self) -> &Matrix {
        &self.init
    }

    fn channel(&self, phi: Matrix) -> Result<PoissonChannel> {
        PoissonChannel::new(phi, self.dark.clone())
    }
}

/// How the ascent evaluates information and its gradient.
#[derive(Clone, Copy, Debug)]
pub enum DesignMi {
    /// Exact enumeration over a truncated output grid. Backtracking
    /// comparisons are between exact values, so accepted information is
    /// strictly increasing.
    Enumeration { epsilon: f64, cell_cap: u128 },
    /// Monte Carlo with a fixed budget. Every evaluation inside one line
    /// search shares one random stream (common random numbers), so the
    /// candidate-versus-incumbent comparison sees sampling noise that
    /// largely cancels instead of flapping the accept decision.
    MonteCarlo { budget: u64, seed: u64 },
}

/// Stopping and step-size controls for [`design_phi`].
#[derive(Clone, Copy, Debug)]
pub struct DesignOptions {
    pub max_iters: u64,
    /// Stop once an accepted step improves information by less than
    /// `tol * (1 + |I|)`.
    pub tol: f64,
    pub mi: DesignMi,
}

/// One row of the ascent log. `iteration` 0 is the projected start;
/// `grad_norm` is the projected-gradient residual at the point the row
/// describes, so the last row certifies how stationary the run ended.
#[derive(Clone, Copy, Debug)]
pub struct TraceRecord {
    pub iteration: u64,
    pub mi: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub accepted: bool,
}

/// The full ascent log plus the final matrix.
#[derive(Clone, Debug)]
pub struct DesignTrace {
    pub records: Vec<TraceRecord>,
    pub final_phi: Matrix,
}

impl DesignTrace {
    pub fn initial_mi(&self) -> f64 {
        self.records[0].mi
    }

    pub fn final_mi(&self) -> f64 {
        self.records
            .iter()
            .rev()
            .find(|r| r.accepted)
            .expect("row 0 is always present and accepted")
            .mi
    }

    /// Information values along the accepted subsequence, starting at the
    /// initial point.
    pub fn accepted_mis(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.mi)
            .collect()
    }
}

/// Below this projected-gradient residual (scaled by `1 + |I|`) the
/// current point is treated as stationary and the ascent stops without
/// attempting a step.
const STATIONARITY_FLOOR: f64 = 1e-8;

/// Backtracking gives up once the step factor drops below this.
const MIN_STEP: f64 = 1e-8;

fn ensure_finite(grad: &Matrix, iteration: u64) -> Result<()> {
    let (rows, cols) = grad.shape();
    for r in 0..rows {
        for c in 0..cols {
            if !grad[(r, c)].is_finite() {
                return Err(Error::NonFinite(format!(
                    "information gradient at design iteration {iteration}, entry ({r}, {c})"
                )));
            }
        }
    }
    Ok(())
}

/// Maximizes mutual information over the constraint set by projected
/// gradient ascent with backtracking.
///
/// Steps start at factor 1 and halve until the information strictly
/// increases; a line search that exhausts [`MIN_STEP`] logs one rejected
/// row and ends the run. With enumeration evaluation the accepted
/// information sequence is therefore strictly increasing; with Monte
/// Carlo it is increasing under each iteration's common random stream,
/// which is as much as sampling noise allows.
pub fn design_phi(p: &DesignProblem, opts: &DesignOptions) -> Result<DesignTrace> {
    if opts.max_iters == 0 {
        return Err(Error::InvalidParameter(
            "design needs max_iters >= 1".to_string(),
        ));
    }
    if !opts.tol.is_finite() || opts.tol <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "design tolerance must be positive, got {}",
            opts.tol
        )));
    }

    let eval_mi = |ch: &PoissonChannel, iteration: u64| -> Result<f64> {
        match opts.mi {
            DesignMi::Enumeration { epsilon, cell_cap } => {
                Ok(mi_poisson_enum_with_cap(ch, p.prior(), epsilon, cell_cap)?.value)
            }
            DesignMi::MonteCarlo { budget, seed } => {
                let stream = RngStream::new(seed, 2 * iteration);
                Ok(mi_poisson_mc(ch, p.prior(), budget, &stream)?.value)
            }
        }
    };
    let eval_grad = |ch: &PoissonChannel, iteration: u64| -> Result<Matrix> {
        match opts.mi {
            DesignMi::Enumeration { epsilon, cell_cap } => {
                Ok(poisson_gradients_enum_with_cap(ch, p.prior(), epsilon, cell_cap)?.phi)
            }
            DesignMi::MonteCarlo { budget, seed } => {
                let stream = RngStream::new(seed, 2 * iteration + 1);
                Ok(poisson_gradients_mc(ch, p.prior(), budget, &stream)?.phi)
            }
        }
    };

    let mut phi = p.constraint.project(&p.init)?;
    let mut ch = p.channel(phi.clone())?;
    let mut mi = eval_mi(&ch, 0)?;
    let mut grad = eval_grad(&ch, 0)?;
    ensure_finite(&grad, 0)?;
    let mut residual = p.constraint.projected_residual(&phi, &grad)?;

    let mut records = vec![TraceRecord {
        iteration: 0,
        mi,
        grad_norm: residual,
        step: 0.0,
        accepted: true,
    }];

    for iteration in 1..=opts.max_iters {
        if residual <= STATIONARITY_FLOOR * (1.0 + mi.abs()) {
            break;
        }

        // Under Monte Carlo the incumbent must be re-scored with this
        // iteration's stream so the line search compares like with like.
        let mi_base = match opts.mi {
            DesignMi::Enumeration { .. } => mi,
            DesignMi::MonteCarlo { .. } => eval_mi(&ch, iteration)?,
        };

        let mut eta = 1.0f64;
        let mut accepted_step = None;
        let mut last_eta = eta;
        while eta >= MIN_STEP {
            last_eta = eta;
            let candidate = p.constraint.project(&phi.add(&grad.scaled(eta))?)?;
            if candidate.sub(&phi)?.max_abs() == 0.0 {
                eta *= 0.5;
                continue;
            }
            let cand_ch = p.channel(candidate.clone())?;
            let cand_mi = eval_mi(&cand_ch, iteration)?;
            if cand_mi > mi_base {
                phi = candidate;
                ch = cand_ch;
                mi = cand_mi;
                accepted_step = Some((eta, cand_mi - mi_base));
                break;
            }
            eta *= 0.5;
        }

        let Some((eta, gain)) = accepted_step else {
            records.push(TraceRecord {
                iteration,
                mi,
                grad_norm: residual,
                step: last_eta,
                accepted: false,
            });
            break;
        };

        grad = eval_grad(&ch, iteration)?;
        ensure_finite(&grad, iteration)?;
        residual = p.constraint.projected_residual(&phi, &grad)?;
        records.push(TraceRecord {
            iteration,
            mi,
            grad_norm: residual,
            step: eta,
            accepted: true,
        });

        if gain < opts.tol * (1.0 + mi_base.abs()) {
            break;
        }
    }

    Ok(DesignTrace {
        records,
        final_phi: phi,
    })
}

/// Thresholds a relaxed design back to a binary one: entries at or above
/// the threshold become 1, the rest 0.
pub fn round_to_binary(phi: &Matrix, threshold: f64) -> Result<Matrix> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rounding threshold must lie strictly inside (0, 1), got {threshold}"
        )));
    }
    let (rows, cols) = phi.shape();
    for r in 0..rows {
        for c in 0..cols {
            let v = phi[(r, c)];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "rounding expects entries in [0, 1], got {v} at ({r}, {c})"
                )));
            }
        }
    }
    Ok(phi.map(|v| if v >= threshold { 1.0 } else { 0.0 }))
}
