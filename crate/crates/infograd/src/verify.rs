//! Executable cross-check suite behind `infograd verify`.
//!
//! Each check pits two independent routes to the same quantity against
//! each other at a stated tolerance and reports the measured gap. Every
//! random quantity is derived from the caller's seed through fixed stream
//! ids, so two runs with the same seed produce identical numbers, down to
//! the formatted digits.

use crate::bregman::{
    check_properties, conjugate, gaussian_equivalence_mc, minimizer_margins, neg_log,
    outcome_space_poisson, outer_square_generator, poisson_generator,
    poisson_phi_gradient_via_divergence, recover_unconditional_minimizer, scalar_divergence,
    scaled_square, squared, stacked_scalar, uniform_squared_norm, xlogx, xlogx_minus_x,
    ScalarGenerator,
};
use crate::demo;
use crate::error::{Error, Result};
use crate::gradients::{
    fd_mi_poisson, poisson_gradients_enum_with_cap, poisson_gradients_mc, scalar_poisson_report,
    FdTarget,
};
use crate::information::{mi_poisson_enum_with_cap, DEFAULT_CELL_CAP};
use crate::numerics::{linf_distance, RngStream};

/// Which portion of the suite to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Bregman,
    Gradients,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Bregman => "bregman",
            Suite::Gradients => "gradients",
            Suite::All => "all",
        }
    }

    /// Parses the CLI spelling of a suite name.
    pub fn parse(text: &str) -> Result<Suite> {
        match text {
            "bregman" => Ok(Suite::Bregman),
            "gradients" => Ok(Suite::Gradients),
            "all" => Ok(Suite::All),
            other => Err(Error::Parse(format!(
                "unknown suite '{other}'; expected bregman, gradients, or all"
            ))),
        }
    }
}

/// One named cross-check with its verdict and measured numbers.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Human-readable account of what was compared, including the
    /// measured gap and the tolerance it was held to.
    pub detail: String,
}

/// All checks from one [`run_suite`] call.
#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

fn check(name: &'static str, gap: f64, tol: f64) -> Check {
    Check {
        name,
        passed: gap <= tol,
        detail: format!("max gap {gap:.3e} against tolerance {tol:.1e}"),
    }
}

const GRID_EPSILON: f64 = 1e-12;

fn gradient_checks(seed: u64, out: &mut Vec<Check>) -> Result<()> {
    // Exact enumeration against the frozen external evaluation of the
    // defining sums.
    let (s_ch, s_d) = demo::scalar_binary();
    let mi = mi_poisson_enum_with_cap(&s_ch, &s_d, GRID_EPSILON, DEFAULT_CELL_CAP)?;
    out.push(check(
        "scalar-information-reference",
        (mi.value - demo::golden::SCALAR_BINARY_MI).abs(),
        1e-11,
    ));

    // Closed-form gradient against a finite difference of the information
    // itself, scalar instance.
    let grads = poisson_gradients_enum_with_cap(&s_ch, &s_d, GRID_EPSILON, DEFAULT_CELL_CAP)?;
    let fd_phi = fd_mi_poisson(
        &s_ch,
        &s_d,
        FdTarget::Phi { row: 0, col: 0 },
        None,
        GRID_EPSILON,
        DEFAULT_CELL_CAP,
    )?;
    let fd_dark = fd_mi_poisson(
        &s_ch,
        &s_d,
        FdTarget::Dark { index: 0 },
        None,
        GRID_EPSILON,
        DEFAULT_CELL_CAP,
    )?;
    let rel_phi = (grads.phi[(0, 0)] - fd_phi).abs() / fd_phi.abs();
    let dark = grads.dark.as_ref().expect("counting gradients carry dark");
    let rel_dark = (dark[0] - fd_dark).abs() / fd_dark.abs();
    out.push(check(
        "scalar-gradient-vs-difference",
        rel_phi.max(rel_dark),
        1e-5,
    ));

    // Same comparison on one scaling entry and one dark entry of the
    // two-by-two instance.
    let (v_ch, v_d) = demo::two_by_two();
    let v_grads = poisson_gradients_enum_with_cap(&v_ch, &v_d, GRID_EPSILON, DEFAULT_CELL_CAP)?;
    let v_fd_phi = fd_mi_poisson(
        &v_ch,
        &v_d,
        FdTarget::Phi { row: 0, col: 0 },
        Some(1e-4),
        GRID_EPSILON,
        DEFAULT_CELL_CAP,
    )?;
    let v_fd_dark = fd_mi_poisson(
        &v_ch,
        &v_d,
        FdTarget::Dark { index: 0 },
        Some(1e-4),
        GRID_EPSILON,
        DEFAULT_CELL_CAP,
    )?;
    let v_dark = v_grads.dark.as_ref().expect("counting gradients carry dark");
    let v_rel = ((v_grads.phi[(0, 0)] - v_fd_phi) / v_fd_phi)
        .abs()
        .max(((v_dark[0] - v_fd_dark) / v_fd_dark).abs());
    out.push(check("vector-gradient-vs-difference", v_rel, 1e-4));

    // The standalone scalar code path against the matrix code path. The
    // matrix side runs at a tighter grid epsilon here so that truncation
    // differences sit well below the agreement tolerance.
    let report = scalar_poisson_report(1.0, 0.5, &s_d)?;
    let mi_tight = mi_poisson_enum_with_cap(&s_ch, &s_d, 1e-14, DEFAULT_CELL_CAP)?;
    let grads_tight = poisson_gradients_enum_with_cap(&s_ch, &s_d, 1e-14, DEFAULT_CELL_CAP)?;
    let dark_tight = grads_tight.dark.as_ref().expect("counting gradients carry dark");
    let scalar_gap = (report.information - mi_tight.value)
        .abs()
        .max((report.phi - grads_tight.phi[(0, 0)]).abs())
        .max((report.dark - dark_tight[0]).abs());
    out.push(check("scalar-path-vs-matrix-path", scalar_gap, 1e-12));

    // Monte Carlo gradient against enumeration, five standard errors.
    let mc = poisson_gradients_mc(&v_ch, &v_d, 60_000, &RngStream::new(seed, 10))?;
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let se = mc.phi_error[(i, j)].max(1e-12);
            worst = worst.max((mc.phi[(i, j)] - v_grads.phi[(i, j)]).abs() / se);
        }
    }
    out.push(check("monte-carlo-vs-enumeration", worst, 5.0));

    // Gaussian channel: per-sample divergence identity and the two
    // gradient routes on shared samples.
    let (g_ch, g_d) = demo::two_by_two_gaussian();
    let dual = gaussian_equivalence_mc(&g_ch, &g_d, 30_000, &RngStream::new(seed, 11))?;
    out.push(check(
        "gaussian-identity-per-sample",
        dual.max_identity_gap,
        1e-10,
    ));
    out.push(check(
        "gaussian-route-agreement",
        dual.divergence_route.sub(&dual.product_route)?.max_abs(),
        1e-12,
    ));
    Ok(())
}

fn bregman_checks(seed: u64, out: &mut Vec<Check>) -> Result<()> {
    // Defining properties sweep on generators with verified convexity.
    let mut worst_violations = 0usize;
    let mut linearity = 0.0f64;
    // Linearity companions must live on the same order cone as the
    // generator they are combined with.
    let pairs = [
        (stacked_scalar(&xlogx_minus_x(), 2, 2), uniform_squared_norm(2, 2, 2)),
        (stacked_scalar(&squared(), 2, 2), uniform_squared_norm(2, 2, 2)),
        (outer_square_generator(2), outer_square_generator(2)),
    ];
    for (g, companion) in &pairs {
        let report = check_properties(g, Some(companion), 1_000, &RngStream::new(seed, 20))?;
        worst_violations = worst_violations.max(report.violations.len());
        linearity = linearity.max(report.max_linearity_residual.unwrap_or(0.0));
    }
    out.push(Check {
        name: "divergence-defining-properties",
        passed: worst_violations == 0,
        detail: format!("{worst_violations} violations across 1000-trial sweeps"),
    });
    out.push(check("divergence-linearity", linearity, 1e-10));

    // Convex-conjugate duality on the closed-form catalog.
    let catalog: Vec<ScalarGenerator> =
        vec![squared(), xlogx(), xlogx_minus_x(), neg_log(), scaled_square(0.7)?];
    let mut worst = 0.0f64;
    for g in &catalog {
        let dual = conjugate(g);
        let mut stream = RngStream::new(seed, 21);
        for _ in 0..200 {
            let (lo, hi) = g.sample_range();
            let x = lo + (hi - lo) * stream.uniform();
            let y = lo + (hi - lo) * stream.uniform();
            let direct = scalar_divergence(g, x, y)?;
            let swapped = scalar_divergence(&dual, g.slope(y)?, g.slope(x)?)?;
            let rel = (direct - swapped).abs() / (1.0 + direct.abs());
            worst = worst.max(rel);
        }
    }
    out.push(check("conjugate-duality", worst, 1e-9));

    // The headline equivalence: expected divergence between the input and
    // its conditional mean against the information gradient.
    let (v_ch, v_d) = demo::two_by_two();
    let via_div = poisson_phi_gradient_via_divergence(&v_ch, &v_d, GRID_EPSILON, DEFAULT_CELL_CAP)?;
    let direct = poisson_gradients_enum_with_cap(&v_ch, &v_d, GRID_EPSILON, DEFAULT_CELL_CAP)?;
    out.push(check(
        "gradient-equals-expected-divergence",
        via_div.sub(&direct.phi)?.max_abs(),
        1e-8,
    ));

    // Minimizer checks: nothing measurable beats the conditional mean,
    // and the blind optimum is the prior mean.
    let space = outcome_space_poisson(&v_ch, &v_d, 1e-9, DEFAULT_CELL_CAP)?;
    let margins = minimizer_margins(
        &poisson_generator(&v_ch),
        &space,
        300,
        &RngStream::new(seed, 22),
    )?;
    out.push(Check {
        name: "conditional-mean-not-dominated",
        passed: margins.dominated == 0,
        detail: format!(
            "{} of {} alternatives dominated the conditional mean",
            margins.dominated, margins.alternatives
        ),
    });

    let recovered = recover_unconditional_minimizer(&uniform_squared_norm(2, 2, 2), &v_d)?;
    out.push(check(
        "prior-mean-recovery",
        linf_distance(&recovered, &v_d.mean()),
        1e-9,
    ));
    Ok(())
}

/// Runs the requested checks with all randomness derived from `seed`.
///
/// The report is fully deterministic: identical `(suite, seed)` pairs
/// produce identical check names, verdicts, and detail strings.
pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Gradients | Suite::All) {
        gradient_checks(seed, &mut checks)?;
    }
    if matches!(suite, Suite::Bregman | Suite::All) {
        bregman_checks(seed, &mut checks)?;
    }
    Ok(SuiteReport {
        suite: suite.name(),
        seed,
        checks,
    })
}
