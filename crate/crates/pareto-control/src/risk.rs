//! Backward recursion for the Bayes risk of the adaptive control problem.
//!
//! Conditional on reaching stage `n` with state `x` and posterior scales
//! `rbar`, the optimal truncated expected cost has the exact quadratic form
//!
//! ```text
//! W_n(x, rbar) = x^T A_n x + 2 rbar^T B_n x + 2 rbar^T C_n rbar
//! ```
//!
//! because the posterior shapes evolve deterministically (one per stage), so
//! the only state carried by the filter is `rbar`, and every predictive
//! expectation of a quadratic is again a quadratic in `(x, rbar)` with
//! stage-dependent constant coefficients. The full derivation, including the
//! completion of the square and the random-horizon tail weights, is in
//! `docs/value-recursion.md`.
//!
//! Coefficients are stored unnormalized, scaled by the horizon tail mass
//! `phi_n`: the pass multiplies the stage cost by `phi_n` and adds the
//! continuation without any ratio, which avoids dividing by small tail
//! masses mid-pass. Queries divide by `phi_n` once at the end.

use crate::filter::{scalar_constants, ConstantMode, FilterError, FilterState};
use crate::linalg::{self, Tolerance};
use crate::scenario::{PriorSpec, Scenario};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("stage {stage}: control normal matrix is singular in the exact pass (use the regularized pass)")]
    SingularStageGain { stage: usize },
    #[error("value recursion requires a square system (r = m); got r = {r}, m = {m}")]
    NotSquare { r: usize, m: usize },
    #[error("stage {stage} is out of range (horizon bound {max})")]
    StageOutOfRange { stage: usize, max: usize },
    #[error("stage {stage}: value coefficient lost positive semidefiniteness (min eigenvalue {min_eig:.3e})")]
    CoefficientNotPsd { stage: usize, min_eig: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Value-function coefficients for every stage, tail-weighted.
#[derive(Debug, Clone)]
pub struct RiskCoeffs {
    pub(crate) mode: ConstantMode,
    pub(crate) phis: Vec<f64>,
    pub(crate) a_hat: Vec<DMatrix<f64>>,
    pub(crate) b_hat: Vec<DMatrix<f64>>,
    pub(crate) c_hat: Vec<DMatrix<f64>>,
    /// Stages where the exact minimizer was replaced by the ridge control.
    pub(crate) regularized_stages: Vec<usize>,
    pub(crate) ridge: Option<f64>,
}

impl RiskCoeffs {
    pub fn mode(&self) -> ConstantMode {
        self.mode
    }

    pub fn max_stage(&self) -> usize {
        self.phis.len() - 1
    }

    pub fn tail_mass(&self, n: usize) -> f64 {
        self.phis[n]
    }

    /// Normalized coefficients `(A_n, B_n, C_n)` of the stage-n value form.
    pub fn coefficients(&self, n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>), RiskError> {
        self.check_stage(n)?;
        let phi = self.phis[n];
        Ok((&self.a_hat[n] / phi, &self.b_hat[n] / phi, &self.c_hat[n] / phi))
    }

    /// Stages at which the ridge control replaced the exact minimizer; empty
    /// for coefficients from the exact pass.
    pub fn regularized_stages(&self) -> &[usize] {
        &self.regularized_stages
    }

    /// The state-independent gain matrix `K_n = k_n + phi_n^{-1} b^T Ahat_{n+1} b`
    /// (just `k_M` at the terminal stage). `sc` must be the square scenario
    /// the coefficients were computed from.
    pub fn gain_matrix(&self, sc: &Scenario, n: usize) -> Result<DMatrix<f64>, RiskError> {
        self.check_stage(n)?;
        let m = self.a_hat[0].nrows();
        if sc.state_dim() != m || !sc.is_square() || sc.max_stage() != self.max_stage() {
            return Err(RiskError::DimensionMismatch {
                context: format!(
                    "gain matrix: coefficients are for a square {m}-state scenario with horizon bound {}",
                    self.max_stage()
                ),
            });
        }
        let st = sc.stage(n);
        if n == self.max_stage() {
            return Ok(st.k.clone());
        }
        Ok(symmetrize(
            &st.k + (st.b.transpose() * &self.a_hat[n + 1] * &st.b) / self.phis[n],
        ))
    }

    pub fn ridge(&self) -> Option<f64> {
        self.ridge
    }

    fn check_stage(&self, n: usize) -> Result<(), RiskError> {
        if n >= self.phis.len() {
            return Err(RiskError::StageOutOfRange { stage: n, max: self.phis.len() - 1 });
        }
        Ok(())
    }
}

/// Gain pair of the stage minimization: the control solves `K u = L`.
#[derive(Debug, Clone)]
pub struct StageGain {
    pub k: DMatrix<f64>,
    pub l: DVector<f64>,
}

/// Per-stage diagonal constants entering the recursion; zeros on inactive
/// coordinates so their terms vanish identically.
struct StageConstants {
    q: DVector<f64>,
    q1: DVector<f64>,
    q2: DVector<f64>,
    q3: DVector<f64>,
    q4: DVector<f64>,
    t: DVector<f64>,
    t1: DVector<f64>,
}

fn constants_for_betas(
    betas: &[f64],
    active: usize,
    mode: ConstantMode,
) -> Result<StageConstants, RiskError> {
    let m = betas.len();
    let mut out = StageConstants {
        q: DVector::zeros(m),
        q1: DVector::zeros(m),
        q2: DVector::zeros(m),
        q3: DVector::zeros(m),
        q4: DVector::zeros(m),
        t: DVector::zeros(m),
        t1: DVector::zeros(m),
    };
    for i in 0..active {
        let beta = betas[i];
        let [q, q1, q2, q3, q4] = scalar_constants(beta, mode)?;
        out.q[i] = q;
        out.q1[i] = q1;
        out.q2[i] = q2;
        out.q3[i] = q3;
        out.q4[i] = q4;
        out.t[i] = beta / (beta - 1.0);
        out.t1[i] = beta / (beta - 2.0);
    }
    Ok(out)
}

fn schedule_constants(prior: &PriorSpec, n: usize, mode: ConstantMode) -> Result<StageConstants, RiskError> {
    let betas: Vec<f64> = prior
        .beta
        .iter()
        .enumerate()
        .map(|(i, &b)| if i < prior.active { b + n as f64 } else { 0.0 })
        .collect();
    constants_for_betas(&betas, prior.active, mode)
}

/// Blocks of the stage weight on `(x; lambda)`: `(s_xx, s_lx, s_ll)`.
fn split_weight(s: &DMatrix<f64>, m: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    (
        s.view((0, 0), (m, m)).into_owned(),
        s.view((m, 0), (m, m)).into_owned(),
        s.view((m, m), (m, m)).into_owned(),
    )
}

/// Posterior expectation of `lambda^T s_ll lambda` as a quadratic in `rbar`:
/// `T s_ll T` plus the diagonal variance correction.
fn bound_quadratic(s_ll: &DMatrix<f64>, cons: &StageConstants) -> DMatrix<f64> {
    let m = s_ll.nrows();
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            g[(i, j)] = cons.t[i] * s_ll[(i, j)] * cons.t[j];
        }
        g[(i, i)] += s_ll[(i, i)] * (cons.t1[i] - cons.t[i] * cons.t[i]);
    }
    g
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    m += t;
    m * 0.5
}

fn check_psd(stage: usize, m: &DMatrix<f64>) -> Result<(), RiskError> {
    let scale = 1.0 + m.amax();
    let min_eig = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-8 * scale {
        return Err(RiskError::CoefficientNotPsd { stage, min_eig });
    }
    Ok(())
}

/// The matrix standing in for `-K_hat^{-1}` in the completed square.
///
/// Exact pass: literally `-K_hat^{-1}`. Ridge substitution (singular stage,
/// regularized pass): the control is `u = -G z` with `G = (K^T K + th^2 I)^{-1} K^T`
/// on phi-normalized gains, and plugging that linear control back in yields
/// `(G K G - 2G) / phi` exactly; the value is then the risk of the ridge
/// policy rather than the optimum, and the stage is recorded.
fn square_completion(
    khat: &DMatrix<f64>,
    phi: f64,
    ridge: Option<f64>,
    stage: usize,
    tol: &Tolerance,
    regularized: &mut Vec<usize>,
) -> Result<DMatrix<f64>, RiskError> {
    let m = khat.nrows();
    if linalg::rank_of(khat, tol)? == m {
        let inv = khat
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| khat.clone().lu().try_inverse());
        if let Some(inv) = inv {
            return Ok(-inv);
        }
    }
    let theta = ridge.ok_or(RiskError::SingularStageGain { stage })?;
    let kn = khat / phi;
    let g = crate::linalg::tikhonov_solve_matrix(&kn, theta)?;
    let h = &g * &kn * &g - 2.0 * &g;
    regularized.push(stage);
    Ok(h / phi)
}

fn backward(sc: &Scenario, mode: ConstantMode, ridge: Option<f64>) -> Result<RiskCoeffs, RiskError> {
    if !sc.is_square() {
        return Err(RiskError::NotSquare { r: sc.row_count(), m: sc.state_dim() });
    }
    let m = sc.state_dim();
    let last = sc.max_stage();
    let tol = Tolerance::for_shape(m, m);
    let mut a_hat = vec![DMatrix::zeros(m, m); last + 1];
    let mut b_hat = vec![DMatrix::zeros(m, m); last + 1];
    let mut c_hat = vec![DMatrix::zeros(m, m); last + 1];
    let phis: Vec<f64> = (0..=last).map(|n| sc.horizon().tail_mass(n)).collect();
    let mut regularized = Vec::new();

    // Terminal stage: no continuation, the control only adds cost, so u = 0
    // and the value is the posterior expectation of the stage weight.
    {
        let st = sc.stage(last);
        let cons = schedule_constants(sc.prior(), last, mode)?;
        let (s_xx, s_lx, s_ll) = split_weight(&st.s, m);
        let t_diag = DMatrix::from_diagonal(&cons.t);
        a_hat[last] = phis[last] * s_xx;
        b_hat[last] = phis[last] * (&t_diag * &s_lx);
        c_hat[last] = symmetrize(0.5 * phis[last] * bound_quadratic(&s_ll, &cons));
    }

    for n in (0..last).rev() {
        let st = sc.stage(n);
        let phi = phis[n];
        let cons = schedule_constants(sc.prior(), n, mode)?;
        let (s_xx, s_lx, s_ll) = split_weight(&st.s, m);
        let t_diag = DMatrix::from_diagonal(&cons.t);

        let a_next = &a_hat[n + 1];
        let b_next = &b_hat[n + 1];
        let c_next = &c_hat[n + 1];

        let khat = symmetrize(phi * &st.k + st.b.transpose() * a_next * &st.b);
        let gamma_x = st.b.transpose() * a_next * &st.alpha;
        // Coefficient of the rbar-to-state cross term produced by one step:
        // E[x'] couples through c E[v], E[rbar'] couples through B.
        let q_diag = DMatrix::from_diagonal(&cons.q);
        let q2_diag = DMatrix::from_diagonal(&cons.q2);
        let n_cross = &q_diag * st.c.transpose() * a_next + &q2_diag * b_next;
        let gamma_r = st.b.transpose() * n_cross.transpose();

        let h = square_completion(&khat, phi, ridge, n, &tol, &mut regularized)?;

        // rbar-quadratic of the one-step expectation: products of means plus
        // per-coordinate corrections tying v_i to max(r_i, v_i).
        let d = st.c.transpose() * a_next * &st.c;
        let bc = b_next * &st.c;
        let mut m_r = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                m_r[(i, j)] = cons.q[i] * d[(i, j)] * cons.q[j]
                    + 2.0 * cons.q2[i] * bc[(i, j)] * cons.q[j]
                    + 2.0 * cons.q2[i] * c_next[(i, j)] * cons.q2[j];
            }
            m_r[(i, i)] += d[(i, i)] * (cons.q1[i] - cons.q[i] * cons.q[i])
                + 2.0 * bc[(i, i)] * (cons.q4[i] - cons.q2[i] * cons.q[i])
                + 2.0 * c_next[(i, i)] * (cons.q3[i] - cons.q2[i] * cons.q2[i]);
        }

        let a_n = phi * &s_xx + st.alpha.transpose() * a_next * &st.alpha
            + gamma_x.transpose() * &h * &gamma_x;
        let b_n = phi * (&t_diag * &s_lx) + &n_cross * &st.alpha
            + gamma_r.transpose() * &h * &gamma_x;
        let c_n = 0.5
            * (phi * bound_quadratic(&s_ll, &cons) + m_r + gamma_r.transpose() * &h * &gamma_r);

        a_hat[n] = symmetrize(a_n);
        b_hat[n] = b_n;
        c_hat[n] = symmetrize(c_n);
        check_psd(n, &a_hat[n])?;
    }

    Ok(RiskCoeffs {
        mode,
        phis,
        a_hat,
        b_hat,
        c_hat,
        regularized_stages: regularized,
        ridge,
    })
}

/// Exact backward pass. Fails with the stage index if any stage's control
/// normal matrix `K_n` is singular; the regularized pass covers that regime.
pub fn backward_coefficients(sc: &Scenario, mode: ConstantMode) -> Result<RiskCoeffs, RiskError> {
    backward(sc, mode, None)
}

/// Backward pass that never fails on a singular stage: the exact minimizer is
/// replaced there by the Tikhonov control with ridge `theta`, and the
/// resulting coefficients are the exact Bayes risk of that regularized linear
/// policy (an upper bound on the optimum). Stages treated this way are listed
/// in [`RiskCoeffs::regularized_stages`].
pub fn backward_coefficients_regularized(
    sc: &Scenario,
    mode: ConstantMode,
    theta: f64,
) -> Result<RiskCoeffs, RiskError> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(RiskError::Linalg(linalg::LinalgError::BadTheta { theta }));
    }
    backward(sc, mode, Some(theta))
}

/// Gain pair `(K_n, L_n)` of the stage-n minimization at state `x` with
/// posterior `state`, normalized by the tail mass:
///
/// ```text
/// K_n = k_n + phi_n^{-1} b^T Ahat_{n+1} b
/// L_n = -phi_n^{-1} b^T [ Ahat_{n+1} alpha x + (Ahat_{n+1} c Q + Bhat_{n+1}^T Q2) rbar ]
/// ```
///
/// with `Q`, `Q2` the diagonal predictive constants at the state's shapes.
/// At the terminal stage there is no continuation: `K = k_M`, `L = 0`.
pub fn stage_gain(
    sc: &Scenario,
    rc: &RiskCoeffs,
    n: usize,
    x: &DVector<f64>,
    state: &FilterState,
) -> Result<StageGain, RiskError> {
    rc.check_stage(n)?;
    let m = sc.state_dim();
    if x.len() != m || state.dim() != m {
        return Err(RiskError::DimensionMismatch {
            context: format!(
                "stage gain: state dim {m}, got x with {} and filter with {}",
                x.len(),
                state.dim()
            ),
        });
    }
    let st = sc.stage(n);
    if n == rc.max_stage() {
        return Ok(StageGain {
            k: st.k.clone(),
            l: DVector::zeros(m),
        });
    }
    let phi = rc.phis[n];
    let cons = constants_for_betas(state.beta(), state.active(), rc.mode)?;
    let a_next = &rc.a_hat[n + 1];
    let b_next = &rc.b_hat[n + 1];
    let rbar = state.scale_vector();

    let k = &st.k + (st.b.transpose() * a_next * &st.b) / phi;
    let q_diag = DMatrix::from_diagonal(&cons.q);
    let q2_diag = DMatrix::from_diagonal(&cons.q2);
    let l = -(st.b.transpose()
        * (a_next * &st.alpha * x + (a_next * &st.c * q_diag + b_next.transpose() * q2_diag) * rbar))
        / phi;
    Ok(StageGain { k: symmetrize(k), l })
}

/// Value of the stage-n Bayes risk form at `(x, rbar)`.
pub fn bayes_risk_value(
    rc: &RiskCoeffs,
    n: usize,
    x: &DVector<f64>,
    rbar: &DVector<f64>,
) -> Result<f64, RiskError> {
    rc.check_stage(n)?;
    let m = rc.a_hat[n].nrows();
    if x.len() != m || rbar.len() != m {
        return Err(RiskError::DimensionMismatch {
            context: format!("risk value: coefficient dim {m}, got x {} and rbar {}", x.len(), rbar.len()),
        });
    }
    let quad = (x.transpose() * &rc.a_hat[n] * x)[(0, 0)]
        + 2.0 * (rbar.transpose() * &rc.b_hat[n] * x)[(0, 0)]
        + 2.0 * (rbar.transpose() * &rc.c_hat[n] * rbar)[(0, 0)];
    Ok(quad / rc.phis[n])
}
