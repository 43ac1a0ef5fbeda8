//! Closed-loop simulation and Monte Carlo risk estimation.
//!
//! A rollout draws the disturbance bound, the random horizon, and the
//! per-stage disturbances from one RNG in a documented order, then runs a
//! policy through the realized stages. Replications are independent ChaCha
//! streams of a base seed, so estimates are bit-identical for a given
//! `(seed, reps)` pair no matter how many worker threads run them.
//!
//! Draw order within one rollout, which freezes the meaning of a seed:
//! 1. one Pareto draw per active coordinate of the bound (skipped entirely
//!    for a fixed bound),
//! 2. one uniform for the horizon,
//! 3. per executed transition, one uniform per active coordinate of the
//!    disturbance, coordinates ascending.

use crate::filter::FilterError;
use crate::linalg::LinalgError;
use crate::risk::RiskError;
use crate::scenario::Scenario;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("bad disturbance bound: {context}")]
    BadLambda { context: String },
    #[error("state became non-finite at stage {stage}")]
    NonFiniteState { stage: usize },
    #[error("realized loss {loss:.6e} is negative beyond roundoff")]
    NegativeLoss { loss: f64 },
    #[error("risk estimation needs at least 2 replications, got {reps}")]
    TooFewReps { reps: u64 },
    #[error("policy failure: {context}")]
    PolicyFailure { context: String },
    #[error(transparent)]
    Control(#[from] crate::control::ControlError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A feedback rule driven by the stage index and the observed state.
///
/// `observe` is called after every executed transition so adaptive rules can
/// update their posterior; the default ignores the information.
pub trait Policy {
    fn act(&mut self, n: usize, x: &DVector<f64>) -> Result<DVector<f64>, SimError>;

    fn observe(
        &mut self,
        _n: usize,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _x_next: &DVector<f64>,
    ) -> Result<(), SimError> {
        Ok(())
    }
}

/// The do-nothing baseline: `u = 0` at every stage.
pub struct ZeroPolicy {
    m: usize,
}

impl ZeroPolicy {
    pub fn new(m: usize) -> Self {
        ZeroPolicy { m }
    }
}

impl Policy for ZeroPolicy {
    fn act(&mut self, _n: usize, _x: &DVector<f64>) -> Result<DVector<f64>, SimError> {
        Ok(DVector::zeros(self.m))
    }
}

/// Where the true disturbance bound of a rollout comes from.
#[derive(Debug, Clone)]
pub enum LambdaSource {
    /// Draw it from the scenario's Pareto prior (the Bayes setting).
    Prior,
    /// Use this exact bound; inactive coordinates must be zero.
    Fixed(DVector<f64>),
}

/// One simulated closed-loop run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// The bound the disturbances were actually drawn under.
    pub lambda: DVector<f64>,
    /// Realized horizon N: stages 0..=N incur cost.
    pub horizon: usize,
    /// States `x_0 ..= x_N`.
    pub states: Vec<DVector<f64>>,
    /// Controls `u_0 ..= u_N`.
    pub controls: Vec<DVector<f64>>,
    /// Disturbances `v_0 ..= v_{N-1}`, one per executed transition.
    pub disturbances: Vec<DVector<f64>>,
    /// Realized loss, the sum of all stage costs.
    pub loss: f64,
    /// Norm of the dropped dynamics rows per transition; all zeros unless the
    /// system is overdetermined (r > m).
    pub step_residuals: Vec<f64>,
}

impl Trajectory {
    pub fn max_step_residual(&self) -> f64 {
        self.step_residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// One Pareto draw with the given shape and scale, via inverse CDF.
/// Uses `1 - u` so the result is finite for every generator output.
pub fn pareto_draw(rng: &mut impl Rng, beta: f64, scale: f64) -> f64 {
    let u: f64 = rng.random();
    scale * (1.0 - u).powf(-1.0 / beta)
}

/// One draw from the predictive disturbance law with posterior shape `beta`
/// and scale `r`: a posterior bound draw followed by a uniform on `[0, bound]`.
pub fn predictive_draw(rng: &mut impl Rng, beta: f64, r: f64) -> f64 {
    let bound = pareto_draw(rng, beta, r);
    let u: f64 = rng.random();
    u * bound
}

fn draw_lambda(
    sc: &Scenario,
    source: &LambdaSource,
    rng: &mut impl Rng,
) -> Result<DVector<f64>, SimError> {
    let m = sc.state_dim();
    let prior = sc.prior();
    match source {
        LambdaSource::Prior => {
            let mut lambda = DVector::zeros(m);
            for i in 0..prior.active {
                lambda[i] = pareto_draw(rng, prior.beta[i], prior.scale[i]);
            }
            Ok(lambda)
        }
        LambdaSource::Fixed(v) => {
            if v.len() != m {
                return Err(SimError::DimensionMismatch {
                    context: format!("fixed bound has {} coordinates, state dim is {m}", v.len()),
                });
            }
            for (i, &x) in v.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(SimError::BadLambda {
                        context: format!("coordinate {i} is {x}"),
                    });
                }
                if i >= prior.active && x != 0.0 {
                    return Err(SimError::BadLambda {
                        context: format!("coordinate {i} is inactive but the bound is {x}"),
                    });
                }
            }
            Ok(v.clone())
        }
    }
}

/// Quadratic stage cost `y^T s y + u^T k u` with `y = (x; lambda)`.
fn stage_cost(sc: &Scenario, n: usize, x: &DVector<f64>, lambda: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let m = sc.state_dim();
    let st = sc.stage(n);
    let mut y = DVector::zeros(2 * m);
    y.rows_mut(0, m).copy_from(x);
    y.rows_mut(m, m).copy_from(lambda);
    (y.transpose() * &st.s * &y)[(0, 0)] + (u.transpose() * &st.k * u)[(0, 0)]
}

/// Run one closed loop: draw the bound and horizon, then execute stages
/// `0..=N`, stepping the original (possibly non-square) dynamics rows and
/// completing the next state by the minimum-norm rule. Dropped-row defects
/// are recorded per transition in `step_residuals`.
pub fn rollout<P: Policy + ?Sized>(
    sc: &Scenario,
    policy: &mut P,
    source: &LambdaSource,
    rng: &mut impl Rng,
) -> Result<Trajectory, SimError> {
    let m = sc.state_dim();
    let r = sc.row_count();
    let active = sc.prior().active;
    let lambda = draw_lambda(sc, source, rng)?;
    let horizon = sc.horizon().sample(rng);

    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon + 1);
    let mut disturbances = Vec::with_capacity(horizon);
    let mut step_residuals = Vec::with_capacity(horizon);
    let mut loss = 0.0;
    let mut x = sc.x0().clone();

    for n in 0..=horizon {
        let u = policy.act(n, &x)?;
        if u.len() != m {
            return Err(SimError::DimensionMismatch {
                context: format!("policy returned a control of length {}, expected {m}", u.len()),
            });
        }
        loss += stage_cost(sc, n, &x, &lambda, &u);
        states.push(x.clone());
        controls.push(u.clone());
        if n == horizon {
            break;
        }
        let mut v = DVector::zeros(m);
        for i in 0..active {
            let t: f64 = rng.random();
            v[i] = t * lambda[i];
        }
        let st = sc.stage(n);
        let w = &st.alpha * &x + &st.b * controls.last().unwrap() + &st.c * &v;
        // Rows beyond the state dimension are dropped by the completion; the
        // norm of what was dropped is the consistency defect of this step.
        let residual = if r > m {
            w.rows(m, r - m).norm()
        } else {
            0.0
        };
        let mut x_next = DVector::zeros(m);
        for i in 0..m.min(r) {
            x_next[i] = w[i];
        }
        if x_next.iter().any(|t| !t.is_finite()) {
            return Err(SimError::NonFiniteState { stage: n + 1 });
        }
        policy.observe(n, &x, &u, &x_next)?;
        disturbances.push(v);
        step_residuals.push(residual);
        x = x_next;
    }

    // Stage weights are PSD, so the loss is nonnegative up to roundoff.
    if loss < 0.0 {
        if loss >= -1e-10 * (1.0 + loss.abs()) {
            loss = 0.0;
        } else {
            return Err(SimError::NegativeLoss { loss });
        }
    }

    Ok(Trajectory {
        lambda,
        horizon,
        states,
        controls,
        disturbances,
        loss,
        step_residuals,
    })
}

/// Monte Carlo estimate of a policy's Bayes risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimReport {
    pub mean: f64,
    /// Standard error of the mean, with the n-1 variance denominator.
    pub se: f64,
    pub reps: u64,
    pub seed: u64,
    /// Largest dropped-row defect seen across all replications.
    pub max_step_residual: f64,
}

/// Average the realized loss over `reps` independent rollouts.
///
/// Replication `i` uses `ChaCha8Rng::seed_from_u64(seed)` switched to stream
/// `i` and a fresh policy from `factory`, so results do not depend on the
/// rayon worker count and repeat bit-for-bit for the same seed.
pub fn estimate_risk<P, F>(
    sc: &Scenario,
    factory: F,
    source: &LambdaSource,
    reps: u64,
    seed: u64,
) -> Result<SimReport, SimError>
where
    P: Policy,
    F: Fn() -> Result<P, SimError> + Sync,
{
    if reps < 2 {
        return Err(SimError::TooFewReps { reps });
    }
    let results: Result<Vec<(f64, f64)>, SimError> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let mut policy = factory()?;
            let tr = rollout(sc, &mut policy, source, &mut rng)?;
            Ok((tr.loss, tr.max_step_residual()))
        })
        .collect();
    let results = results?;

    let n = reps as f64;
    let mean = results.iter().map(|&(l, _)| l).sum::<f64>() / n;
    let var = results
        .iter()
        .map(|&(l, _)| (l - mean) * (l - mean))
        .sum::<f64>()
        / (n - 1.0);
    let se = (var / n).sqrt();
    let max_step_residual = results.iter().map(|&(_, r)| r).fold(0.0, f64::max);
    Ok(SimReport {
        mean,
        se,
        reps,
        seed,
        max_step_residual,
    })
}
