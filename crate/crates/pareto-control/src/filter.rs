//! Conjugate filtering for uniformly distributed disturbances with Pareto
//! priors on their unknown upper bounds.
//!
//! Observing `v ~ U[0, lambda]` with a Pareto(beta, r) prior on `lambda`
//! yields a Pareto(beta + 1, max(r, v)) posterior, so the sufficient
//! statistics are one shape and one scale per active coordinate. Shapes grow
//! deterministically by one per observed stage; scales are running maxima and
//! never shrink.
//!
//! The predictive density of the next disturbance given posterior
//! (beta, r) is `h(v) = beta r^beta / (beta + 1) * max(r, v)^-(beta + 1)` on
//! `v >= 0`. Its first two moments and those of the updated scale
//! `max(r, v)` enter the control recursion through five per-coordinate
//! constants; see [`predictive_constants`]. Two published variants of those
//! constants exist (they disagree on three of the five), so the set is
//! selected explicitly by [`ConstantMode`] and the derived set is validated
//! against the quadrature oracle in this crate's tests.

use crate::linalg::{self, Tolerance};
use crate::scenario::{PriorSpec, StageData};
use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("coordinate {coord}: posterior shape {beta} must exceed 2 for these moments")]
    MomentUndefined { coord: usize, beta: f64 },
    #[error("coordinate {coord} is inactive (no disturbance enters there)")]
    InactiveCoordinate { coord: usize },
    #[error("coordinate {coord}: disturbance {value} is negative (support is [0, lambda])")]
    NegativeDisturbance { coord: usize, value: f64 },
    #[error("coordinate {coord}: inactive disturbance entry {value} must be zero")]
    InactiveNotZero { coord: usize, value: f64 },
    #[error("predictive density queried at negative value {v}")]
    NegativeArgument { v: f64 },
    #[error("transition inconsistent with the disturbance channel (residual {residual:.3e})")]
    InconsistentTransition { residual: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Which published set of predictive moment constants to use.
///
/// `Printed` restates the source tables verbatim; `Derived` is the set that
/// actually integrates against the predictive density (the two differ on
/// `q`, `q3`, `q4`). `Derived` is the default everywhere control decisions
/// are made; `Printed` ships for side-by-side comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantMode {
    Printed,
    Derived,
}

impl std::fmt::Display for ConstantMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstantMode::Printed => write!(f, "printed"),
            ConstantMode::Derived => write!(f, "derived"),
        }
    }
}

/// Posterior sufficient statistics after `stage` observed transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub(crate) stage: usize,
    pub(crate) beta: Vec<f64>,
    pub(crate) scale: Vec<f64>,
    pub(crate) active: usize,
}

impl FilterState {
    pub fn stage(&self) -> usize {
        self.stage
    }

    /// Posterior shapes; `beta0 + stage` on active coordinates, zero elsewhere.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Posterior scales (running maxima of observed disturbances).
    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Scales as a vector, for use in the control recursion.
    pub fn scale_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.scale)
    }
}

/// Filter initialized at the prior, before any observation.
pub fn init_filter(prior: &PriorSpec) -> FilterState {
    FilterState {
        stage: 0,
        beta: prior.beta.clone(),
        scale: prior.scale.clone(),
        active: prior.active,
    }
}

/// Conjugate update after observing one disturbance vector: shapes advance by
/// one, scales take the running maximum. Fails on a negative active entry or
/// a nonzero inactive entry.
pub fn update_posterior(state: &FilterState, v: &DVector<f64>) -> Result<FilterState, FilterError> {
    if v.len() != state.dim() {
        return Err(FilterError::DimensionMismatch {
            context: format!("disturbance has {} entries, filter tracks {}", v.len(), state.dim()),
        });
    }
    for coord in 0..state.dim() {
        if coord < state.active {
            if v[coord] < 0.0 || !v[coord].is_finite() {
                return Err(FilterError::NegativeDisturbance { coord, value: v[coord] });
            }
        } else if v[coord] != 0.0 {
            return Err(FilterError::InactiveNotZero { coord, value: v[coord] });
        }
    }
    let mut next = state.clone();
    next.stage += 1;
    for coord in 0..state.active {
        next.beta[coord] += 1.0;
        next.scale[coord] = next.scale[coord].max(v[coord]);
    }
    Ok(next)
}

/// First and second posterior moments of each disturbance bound.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub mean: Vec<f64>,
    pub second: Vec<f64>,
}

/// `E[lambda_i] = beta/(beta-1) * r` and `E[lambda_i^2] = beta/(beta-2) * r^2`
/// per active coordinate; zeros on inactive coordinates.
pub fn posterior_moments(state: &FilterState) -> Result<PosteriorMoments, FilterError> {
    let mut mean = vec![0.0; state.dim()];
    let mut second = vec![0.0; state.dim()];
    for coord in 0..state.active {
        let beta = state.beta[coord];
        if beta <= 2.0 {
            return Err(FilterError::MomentUndefined { coord, beta });
        }
        let r = state.scale[coord];
        mean[coord] = beta / (beta - 1.0) * r;
        second[coord] = beta / (beta - 2.0) * r * r;
    }
    Ok(PosteriorMoments { mean, second })
}

/// Predictive density of the next disturbance in one active coordinate.
pub fn predictive_density(state: &FilterState, coord: usize, v: f64) -> Result<f64, FilterError> {
    if coord >= state.active {
        return Err(FilterError::InactiveCoordinate { coord });
    }
    if v < 0.0 {
        return Err(FilterError::NegativeArgument { v });
    }
    let beta = state.beta[coord];
    let r = state.scale[coord];
    Ok(beta * r.powf(beta) / (beta + 1.0) * r.max(v).powf(-(beta + 1.0)))
}

/// The five per-coordinate predictive moment constants, as multiples of
/// powers of the posterior scale `r`:
///
/// ```text
/// E[v]           = q  * r      E[v^2]         = q1 * r^2
/// E[max(r,v)]    = q2 * r      E[max(r,v)^2]  = q3 * r^2
/// E[v max(r,v)]  = q4 * r^2
/// ```
///
/// Inactive coordinates carry zeros throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentConstants {
    pub q: Vec<f64>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub q3: Vec<f64>,
    pub q4: Vec<f64>,
    pub mode: ConstantMode,
}

/// Scalar constant set for one shape value. The printed and derived variants
/// agree on `q1` and `q2` identically and disagree on `q`, `q3`, `q4`.
pub fn scalar_constants(beta: f64, mode: ConstantMode) -> Result<[f64; 5], FilterError> {
    if beta <= 2.0 || !beta.is_finite() {
        return Err(FilterError::MomentUndefined { coord: 0, beta });
    }
    let q1 = beta / (3.0 * (beta - 2.0));
    let q2 = beta * beta / (beta * beta - 1.0);
    Ok(match mode {
        ConstantMode::Derived => [
            beta / (2.0 * (beta - 1.0)),
            q1,
            q2,
            beta * (beta - 1.0) / ((beta + 1.0) * (beta - 2.0)),
            beta * beta / (2.0 * (beta + 1.0) * (beta - 2.0)),
        ],
        ConstantMode::Printed => [
            beta / (2.0 * (beta + 1.0)),
            q1,
            q2,
            beta * (beta - 1.0) / ((beta + 1.0) * (beta + 2.0)),
            beta * beta / ((beta + 1.0) * (beta - 2.0)),
        ],
    })
}

pub fn predictive_constants(
    state: &FilterState,
    mode: ConstantMode,
) -> Result<MomentConstants, FilterError> {
    let dim = state.dim();
    let mut out = MomentConstants {
        q: vec![0.0; dim],
        q1: vec![0.0; dim],
        q2: vec![0.0; dim],
        q3: vec![0.0; dim],
        q4: vec![0.0; dim],
        mode,
    };
    for coord in 0..state.active {
        let [q, q1, q2, q3, q4] =
            scalar_constants(state.beta[coord], mode).map_err(|_| FilterError::MomentUndefined {
                coord,
                beta: state.beta[coord],
            })?;
        out.q[coord] = q;
        out.q1[coord] = q1;
        out.q2[coord] = q2;
        out.q3[coord] = q3;
        out.q4[coord] = q4;
    }
    Ok(out)
}

/// Recover the disturbance that produced an observed transition:
/// the minimum-norm solution of `c v = x_next - alpha x - b u`, with inactive
/// coordinates forced to exact zero. The transition is rejected when the
/// residual of that reconstruction exceeds `tol.residual_tol * (1 + |d|)`,
/// and when an active coordinate is negative beyond the same tolerance
/// (uniform support is `[0, lambda]`); negative round-off within tolerance is
/// clamped to zero.
pub fn recover_disturbance(
    stage: &StageData,
    x: &DVector<f64>,
    u: &DVector<f64>,
    x_next: &DVector<f64>,
    active: usize,
    tol: &Tolerance,
) -> Result<DVector<f64>, FilterError> {
    let rows = stage.c.nrows();
    let cols = stage.c.ncols();
    if x_next.len() != rows || x.len() != cols || u.len() != cols {
        return Err(FilterError::DimensionMismatch {
            context: format!(
                "transition rows {rows}, state dim {cols}: got x_next {}, x {}, u {}",
                x_next.len(),
                x.len(),
                u.len()
            ),
        });
    }
    let d = x_next - &stage.alpha * x - &stage.b * u;
    let mut v = linalg::pinv(&stage.c, tol)? * &d;
    for coord in active..cols {
        v[coord] = 0.0;
    }
    for coord in 0..active {
        if v[coord] < -tol.residual_tol {
            return Err(FilterError::NegativeDisturbance { coord, value: v[coord] });
        }
        if v[coord] < 0.0 {
            v[coord] = 0.0;
        }
    }
    let residual = (&stage.c * &v - &d).norm();
    if residual > tol.residual_tol * (1.0 + d.norm()) {
        return Err(FilterError::InconsistentTransition { residual });
    }
    Ok(v)
}
