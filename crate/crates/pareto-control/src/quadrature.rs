//! Quadrature oracle for the predictive disturbance density and the Pareto
//! posterior. Everything here is computed by adaptive numeric integration
//! (plus a closed-form power-law tail), independently of the closed-form
//! moment constants elsewhere in the crate, so it can arbitrate them.
//!
//! The predictive density of a disturbance coordinate with posterior shape
//! `beta` and scale `r` is
//!
//! ```text
//! h(v) = beta * r^beta / (beta + 1) * max(r, v)^-(beta + 1),  v >= 0
//! ```
//!
//! flat on `[0, r]` and a power law beyond.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("posterior shape must exceed 2 for second moments, got beta = {beta}")]
    ShapeTooSmall { beta: f64 },
    #[error("posterior scale must be positive, got r = {r}")]
    NonPositiveScale { r: f64 },
    #[error("moment of order {power} needs beta > {power}, got beta = {beta}")]
    MomentDiverges { beta: f64, power: u32 },
}

/// Integrand selector for [`predictive_moment`]: a function of the disturbance
/// `v` and the updated scale `max(r, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictiveIntegrand {
    /// 1 (normalization check).
    One,
    /// v
    V,
    /// v^2
    V2,
    /// max(r, v)
    Max,
    /// max(r, v)^2
    Max2,
    /// v * max(r, v)
    VMax,
}

impl PredictiveIntegrand {
    fn eval(self, r: f64, v: f64) -> f64 {
        let m = r.max(v);
        match self {
            PredictiveIntegrand::One => 1.0,
            PredictiveIntegrand::V => v,
            PredictiveIntegrand::V2 => v * v,
            PredictiveIntegrand::Max => m,
            PredictiveIntegrand::Max2 => m * m,
            PredictiveIntegrand::VMax => v * m,
        }
    }

    /// Power of v the integrand reduces to on the tail v > r (where max = v).
    fn tail_power(self) -> u32 {
        match self {
            PredictiveIntegrand::One => 0,
            PredictiveIntegrand::V | PredictiveIntegrand::Max => 1,
            PredictiveIntegrand::V2 | PredictiveIntegrand::Max2 | PredictiveIntegrand::VMax => 2,
        }
    }
}

fn check_shape_scale(beta: f64, r: f64) -> Result<(), QuadratureError> {
    if !(beta > 2.0) || !beta.is_finite() {
        return Err(QuadratureError::ShapeTooSmall { beta });
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(QuadratureError::NonPositiveScale { r });
    }
    Ok(())
}

/// Predictive density evaluated directly from its formula. Local to the
/// oracle on purpose; the filter keeps its own copy under test.
pub fn predictive_pdf(beta: f64, r: f64, v: f64) -> f64 {
    if v < 0.0 {
        return 0.0;
    }
    beta / (beta + 1.0) * r.powf(beta) * r.max(v).powf(-(beta + 1.0))
}

/// Expectation of the selected integrand against the predictive density,
/// by adaptive Simpson quadrature on `[0, r]` and `[r, 10r]` plus the exact
/// power-law tail beyond `10r`. Absolute accuracy around `1e-13 * max(1, r)^p`.
pub fn predictive_moment(
    beta: f64,
    r: f64,
    integrand: PredictiveIntegrand,
) -> Result<f64, QuadratureError> {
    check_shape_scale(beta, r)?;
    let p = integrand.tail_power();
    let f = |v: f64| integrand.eval(r, v) * predictive_pdf(beta, r, v);
    let tol = 1e-14 * r.max(1.0).powi(p as i32);
    // Split at the density kink so each piece is smooth.
    let head = adaptive_simpson(&f, 0.0, r, tol);
    let mid = adaptive_simpson(&f, r, 10.0 * r, tol);
    // Beyond 10r the integrand is v^p * (beta/(beta+1)) r^beta v^-(beta+1);
    // integral = beta / ((beta+1)(beta-p)) * 10^(p-beta) * r^p.
    let tail = beta / ((beta + 1.0) * (beta - p as f64))
        * 10f64.powf(p as f64 - beta)
        * r.powi(p as i32);
    Ok(head + mid + tail)
}

/// Raw moment `E[lambda^power]` of a Pareto(beta, r) variable, by quadrature
/// on `[r, 10r]` plus the exact tail. Diverges unless `beta > power`.
pub fn pareto_moment(beta: f64, r: f64, power: u32) -> Result<f64, QuadratureError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(QuadratureError::NonPositiveScale { r });
    }
    if !(beta > power as f64) || !beta.is_finite() {
        return Err(QuadratureError::MomentDiverges { beta, power });
    }
    let f = |lam: f64| lam.powi(power as i32) * beta * r.powf(beta) * lam.powf(-(beta + 1.0));
    let tol = 1e-14 * r.max(1.0).powi(power as i32);
    let head = adaptive_simpson(&f, r, 10.0 * r, tol);
    let tail = beta / (beta - power as f64) * 10f64.powf(power as f64 - beta) * r.powi(power as i32);
    Ok(head + tail)
}

/// Adaptive Simpson with Richardson acceptance, depth-capped.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
        + simpson_step(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
}
