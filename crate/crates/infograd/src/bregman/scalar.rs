//! Scalar Bregman divergences and their Legendre duals.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A strictly convex differentiable function on an open interval,
/// packaged with its derivative.
///
/// Strict convexity makes the derivative strictly increasing, which is
/// what [`conjugate`] relies on to invert it numerically.
#[derive(Clone)]
pub struct ScalarGenerator {
    name: String,
    /// Open interval on which `eval` and `deriv` are defined.
    domain: (f64, f64),
    /// Finite box inside the domain from which sweeps draw test points.
    sample_range: (f64, f64),
    eval: ScalarFn,
    deriv: ScalarFn,
}

impl fmt::Debug for ScalarGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarGenerator")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .finish()
    }
}

impl ScalarGenerator {
    pub fn new(
        name: impl Into<String>,
        domain: (f64, f64),
        sample_range: (f64, f64),
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarGenerator {
            name: name.into(),
            domain,
            sample_range,
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn sample_range(&self) -> (f64, f64) {
        self.sample_range
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if !x.is_finite() || x <= self.domain.0 || x >= self.domain.1 {
            return Err(Error::Domain(format!(
                "{} is outside the domain ({}, {}) of generator {}",
                x, self.domain.0, self.domain.1, self.name
            )));
        }
        Ok(())
    }

    /// `F(x)`, domain-checked.
    pub fn value(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let v = (self.eval)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!(
                "generator {} at x = {x}",
                self.name
            )))
        }
    }

    /// `F'(x)`, domain-checked.
    pub fn slope(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let v = (self.deriv)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!(
                "derivative of generator {} at x = {x}",
                self.name
            )))
        }
    }
}

/// `F(x) - F(y) - F'(y) (x - y)`.
pub fn scalar_divergence(g: &ScalarGenerator, x: f64, y: f64) -> Result<f64> {
    Ok(g.value(x)? - g.value(y)? - g.slope(y)? * (x - y))
}

/// Maps the real line onto the open interval, monotonically. Bisection
/// for the derivative inverse happens in the unconstrained parameter so
/// that half-infinite and finite domains need no special cases.
fn unclamp(domain: (f64, f64), t: f64) -> f64 {
    let (lo, hi) = domain;
    match (lo.is_finite(), hi.is_finite()) {
        (false, false) => t,
        (true, false) => lo + t.exp(),
        (false, true) => hi - (-t).exp(),
        (true, true) => lo + (hi - lo) / (1.0 + (-t).exp()),
    }
}

fn invert_slope(g: &ScalarGenerator, s: f64) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::InversionFailed(format!(
            "cannot invert the derivative of {} at non-finite value {s}",
            g.name
        )));
    }
    // The exp inside unclamp overflows past ~709; staying below that
    // still reaches interval endpoints to within absolute 1e-300.
    const T_MAX: f64 = 700.0;
    let slope_at = |t: f64| (g.deriv)(unclamp(g.domain, t));

    let mut t_lo = 0.0f64;
    let mut width = 1.0f64;
    while slope_at(t_lo) > s {
        t_lo -= width;
        width *= 2.0;
        if t_lo < -T_MAX {
            return Err(Error::InversionFailed(format!(
                "{s} lies below the derivative range of generator {}",
                g.name
            )));
        }
    }
    let mut t_hi = 0.0f64;
    width = 1.0;
    while slope_at(t_hi) < s {
        t_hi += width;
        width *= 2.0;
        if t_hi > T_MAX {
            return Err(Error::InversionFailed(format!(
                "{s} lies above the derivative range of generator {}",
                g.name
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (t_lo + t_hi);
        if slope_at(mid) < s {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
    }
    Ok(unclamp(g.domain, 0.5 * (t_lo + t_hi)))
}

/// Legendre conjugate, built by numerical inversion of the derivative.
///
/// `F*(s) = s x(s) - F(x(s))` with `x(s) = (F')^{-1}(s)`, and the
/// conjugate's derivative is `x(s)` itself. The closed-form conjugates of
/// the catalog generators serve as oracles for this construction in the
/// test suite; the duality identity
/// `d_F(x, y) = d_{F*}(F'(y), F'(x))` is what downstream checks consume.
pub fn conjugate(g: &ScalarGenerator) -> ScalarGenerator {
    let for_eval = g.clone();
    let for_deriv = g.clone();
    let (slo, shi) = g.sample_range;
    let dual_sample = (
        (g.deriv)(slo).min((g.deriv)(shi)),
        (g.deriv)(slo).max((g.deriv)(shi)),
    );
    ScalarGenerator {
        name: format!("dual({})", g.name),
        domain: (f64::NEG_INFINITY, f64::INFINITY),
        sample_range: dual_sample,
        eval: Arc::new(move |s| match invert_slope(&for_eval, s) {
            Ok(x) => s * x - (for_eval.eval)(x),
            Err(_) => f64::NAN,
        }),
        deriv: Arc::new(move |s| invert_slope(&for_deriv, s).unwrap_or(f64::NAN)),
    }
}

/// `F(x) = x^2` on the real line; conjugate `s^2 / 4`.
pub fn squared() -> ScalarGenerator {
    ScalarGenerator::new(
        "squared",
        (f64::NEG_INFINITY, f64::INFINITY),
        (-3.0, 3.0),
        |x| x * x,
        |x| 2.0 * x,
    )
}

/// `F(x) = x ln x` on (0, inf); conjugate `exp(s - 1)`.
pub fn xlogx() -> ScalarGenerator {
    ScalarGenerator::new(
        "xlogx",
        (0.0, f64::INFINITY),
        (0.05, 4.0),
        |x| x * x.ln(),
        |x| x.ln() + 1.0,
    )
}

/// `F(x) = x ln x - x` on (0, inf); conjugate `exp(s)`. Its divergence is
/// the generalized Kullback-Leibler form `x ln(x/y) - x + y`.
pub fn xlogx_minus_x() -> ScalarGenerator {
    ScalarGenerator::new(
        "xlogx_minus_x",
        (0.0, f64::INFINITY),
        (0.05, 4.0),
        |x| x * x.ln() - x,
        |x| x.ln(),
    )
}

/// `F(x) = -ln x` on (0, inf); conjugate `-1 - ln(-s)` on (-inf, 0). Its
/// divergence is the Itakura-Saito form `x/y - ln(x/y) - 1`.
pub fn neg_log() -> ScalarGenerator {
    ScalarGenerator::new(
        "neg_log",
        (0.0, f64::INFINITY),
        (0.05, 4.0),
        |x| -x.ln(),
        |x| -1.0 / x,
    )
}

/// `F(x) = x ln(phi x + dark) - x + 1` on (0, inf): the scalar
/// counting-channel generator. With `dark = 0` its divergence collapses
/// to the generalized Kullback-Leibler form, independent of `phi`.
pub fn scaled_count(phi: f64, dark: f64) -> Result<ScalarGenerator> {
    if !(phi > 0.0) || !phi.is_finite() || dark < 0.0 || !dark.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "counting generator needs phi > 0 and dark >= 0, got {phi} and {dark}"
        )));
    }
    Ok(ScalarGenerator::new(
        format!("scaled_count({phi}, {dark})"),
        (0.0, f64::INFINITY),
        (0.05, 4.0),
        move |x| {
            let r = phi * x + dark;
            x * r.ln() - x + 1.0
        },
        move |x| {
            let r = phi * x + dark;
            r.ln() + phi * x / r - 1.0
        },
    ))
}

/// `F(x) = phi x^2` on the real line: the scalar Gaussian generator.
/// Conjugate `s^2 / (4 phi)`.
pub fn scaled_square(phi: f64) -> Result<ScalarGenerator> {
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "square generator needs phi > 0, got {phi}"
        )));
    }
    Ok(ScalarGenerator::new(
        format!("scaled_square({phi})"),
        (f64::NEG_INFINITY, f64::INFINITY),
        (-3.0, 3.0),
        move |x| phi * x * x,
        move |x| 2.0 * phi * x,
    ))
}
