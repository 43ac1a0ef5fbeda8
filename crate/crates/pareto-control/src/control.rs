//! The stage control solve `K u = L` across every shape and rank regime.
//!
//! The gain matrix coming out of the value recursion is square and positive
//! definite whenever the exact pass succeeds, but the solver accepts any
//! rectangular pair so degenerate stage data (zero control weight, redundant
//! actuators, more actuators than states) is handled honestly: each decision
//! carries a tag naming the regime it was solved under, the achieved
//! residual, and the ridge parameter when one was used.

use crate::filter::{init_filter, recover_disturbance, update_posterior, ConstantMode, FilterError, FilterState};
use crate::linalg::{self, LinalgError, Tolerance};
use crate::risk::{
    backward_coefficients, backward_coefficients_regularized, bayes_risk_value, stage_gain,
    RiskCoeffs, RiskError,
};
use crate::scenario::Scenario;
use crate::sim::{Policy, SimError};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Which regime the stage solve ran under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseTag {
    /// Square gain of full rank: direct solve, zero residual.
    FullRankSquare,
    /// More equations than controls, full column rank, target reachable:
    /// the unique exact solution.
    TallFullRankConsistent,
    /// More equations than controls, full column rank, target outside the
    /// column span: the least-squares solution, nonzero residual.
    TallFullRankInconsistent,
    /// Rank-deficient gain of any shape: Tikhonov ridge selects one
    /// minimizer among many.
    RankDeficientRegularized,
    /// Fewer equations than controls, full row rank: the minimum-norm
    /// solution among the exact ones.
    WideFullRankMinNorm,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CaseTag::FullRankSquare => "FULL_RANK_SQUARE",
            CaseTag::TallFullRankConsistent => "TALL_FULL_RANK_CONSISTENT",
            CaseTag::TallFullRankInconsistent => "TALL_FULL_RANK_INCONSISTENT",
            CaseTag::RankDeficientRegularized => "RANK_DEFICIENT_REGULARIZED",
            CaseTag::WideFullRankMinNorm => "WIDE_FULL_RANK_MINNORM",
        };
        f.write_str(name)
    }
}

/// A solved stage control with its provenance.
#[derive(Debug, Clone)]
pub struct ControlDecision {
    pub u: DVector<f64>,
    pub tag: CaseTag,
    /// Achieved defect `|K u - L|`.
    pub residual: f64,
    /// The ridge parameter, present exactly when the rank-deficient branch ran.
    pub theta_used: Option<f64>,
}

/// Decide the solve regime for the pair `(k, l)`.
pub fn classify_case(
    k: &DMatrix<f64>,
    l: &DVector<f64>,
    tol: &Tolerance,
) -> Result<CaseTag, ControlError> {
    check_pair(k, l)?;
    let (rows, cols) = (k.nrows(), k.ncols());
    let rank = linalg::rank_of(k, tol)?;
    if rank < rows.min(cols) {
        return Ok(CaseTag::RankDeficientRegularized);
    }
    if rows == cols {
        return Ok(CaseTag::FullRankSquare);
    }
    if rows > cols {
        let consistent = linalg::in_colspan(k, l, tol)?;
        return Ok(if consistent {
            CaseTag::TallFullRankConsistent
        } else {
            CaseTag::TallFullRankInconsistent
        });
    }
    Ok(CaseTag::WideFullRankMinNorm)
}

fn check_pair(k: &DMatrix<f64>, l: &DVector<f64>) -> Result<(), ControlError> {
    if k.nrows() != l.len() {
        return Err(ControlError::DimensionMismatch {
            context: format!(
                "gain is {}x{}, target has {} rows",
                k.nrows(),
                k.ncols(),
                l.len()
            ),
        });
    }
    Ok(())
}

/// Solve the stage minimization. The regime decides the formula:
/// direct solve when square and nonsingular, pseudoinverse for the full-rank
/// rectangular cases (least squares when tall, minimum norm when wide), and
/// the Tikhonov ridge `(K^T K + theta^2 I)^{-1} K^T L` when rank-deficient,
/// with `theta` defaulting to a gain-scaled value if not supplied.
pub fn bayes_control(
    k: &DMatrix<f64>,
    l: &DVector<f64>,
    tol: &Tolerance,
    theta: Option<f64>,
) -> Result<ControlDecision, ControlError> {
    let tag = classify_case(k, l, tol)?;
    let (u, theta_used) = match tag {
        CaseTag::FullRankSquare => {
            let u = k.clone().lu().solve(l).ok_or_else(|| {
                LinalgError::SolveFailed {
                    context: "full-rank square gain rejected by the factorization".into(),
                }
            })?;
            (u, None)
        }
        CaseTag::TallFullRankConsistent
        | CaseTag::TallFullRankInconsistent
        | CaseTag::WideFullRankMinNorm => (linalg::pinv(k, tol)? * l, None),
        CaseTag::RankDeficientRegularized => {
            let theta = match theta {
                Some(t) => t,
                None => linalg::default_theta(k)?,
            };
            (linalg::tikhonov_solve(k, l, theta)?, Some(theta))
        }
    };
    let residual = (k * &u - l).norm();
    Ok(ControlDecision {
        u,
        tag,
        residual,
        theta_used,
    })
}

/// The adaptive certainty-equivalent-free controller: stage gains from the
/// value recursion, posterior updated from recovered disturbances.
///
/// Built on the square reduction of the scenario; the simulator still steps
/// the original rows. `theta` plays two roles with one value: it regularizes
/// the backward pass at singular stages and the online solve at
/// rank-deficient gains, which keeps the announced risk and the executed
/// policy consistent.
#[derive(Clone)]
pub struct BayesPolicy {
    reduced: Scenario,
    rc: RiskCoeffs,
    state: FilterState,
    theta: Option<f64>,
    tol: Tolerance,
}

/// Build the Bayes policy for a scenario.
///
/// Without a ridge the exact backward pass must succeed; with `theta` the
/// exact pass is still preferred and the regularized pass is the fallback for
/// scenarios with singular stage gains.
pub fn make_policy(
    sc: &Scenario,
    mode: ConstantMode,
    theta: Option<f64>,
) -> Result<BayesPolicy, ControlError> {
    let reduced = sc.reduced();
    let rc = match backward_coefficients(&reduced, mode) {
        Ok(rc) => rc,
        Err(RiskError::SingularStageGain { stage }) => match theta {
            Some(t) => backward_coefficients_regularized(&reduced, mode, t)?,
            None => return Err(ControlError::Risk(RiskError::SingularStageGain { stage })),
        },
        Err(e) => return Err(ControlError::Risk(e)),
    };
    let m = reduced.state_dim();
    Ok(BayesPolicy {
        state: init_filter(reduced.prior()),
        reduced,
        rc,
        theta,
        tol: Tolerance::for_shape(m, m),
    })
}

impl BayesPolicy {
    /// A copy with the posterior reset to the prior, for fresh replications.
    pub fn fresh(&self) -> BayesPolicy {
        let mut copy = self.clone();
        copy.state = init_filter(self.reduced.prior());
        copy
    }

    pub fn coefficients(&self) -> &RiskCoeffs {
        &self.rc
    }

    pub fn filter_state(&self) -> &FilterState {
        &self.state
    }

    /// The announced risk at stage `n` given the current posterior.
    pub fn risk_at(&self, n: usize, x: &DVector<f64>) -> Result<f64, ControlError> {
        Ok(bayes_risk_value(&self.rc, n, x, &self.state.scale_vector())?)
    }

    /// Full decision record at a stage, without consuming an observation.
    pub fn decision(&self, n: usize, x: &DVector<f64>) -> Result<ControlDecision, ControlError> {
        let gain = stage_gain(&self.reduced, &self.rc, n, x, &self.state)?;
        bayes_control(&gain.k, &gain.l, &self.tol, self.theta)
    }
}

impl Policy for BayesPolicy {
    fn act(&mut self, n: usize, x: &DVector<f64>) -> Result<DVector<f64>, SimError> {
        Ok(self.decision(n, x).map_err(SimError::from)?.u)
    }

    fn observe(
        &mut self,
        n: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
    ) -> Result<(), SimError> {
        let v = recover_disturbance(
            self.reduced.stage(n),
            x,
            u,
            x_next,
            self.state.active(),
            &self.tol,
        )?;
        self.state = update_posterior(&self.state, &v)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{HorizonDist, PriorSpec, StageData};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol(rows: usize, cols: usize) -> Tolerance {
        Tolerance::for_shape(rows, cols)
    }

    #[test]
    fn square_full_rank_solves_directly() {
        let k = DMatrix::from_row_slice(1, 1, &[2.0]);
        let l = DVector::from_row_slice(&[-3.0]);
        let d = bayes_control(&k, &l, &tol(1, 1), None).unwrap();
        assert_eq!(d.tag, CaseTag::FullRankSquare);
        assert_relative_eq!(d.u[0], -1.5, epsilon = 1e-15);
        assert!(d.residual < 1e-14);
        assert!(d.theta_used.is_none());
    }

    #[test]
    fn tall_consistent_target_is_hit_exactly() {
        let k = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let l = DVector::from_row_slice(&[1.0, 1.0]);
        let d = bayes_control(&k, &l, &tol(2, 1), None).unwrap();
        assert_eq!(d.tag, CaseTag::TallFullRankConsistent);
        assert_relative_eq!(d.u[0], 1.0, epsilon = 1e-12);
        assert!(d.residual < 1e-12);
    }

    #[test]
    fn tall_inconsistent_target_gets_least_squares() {
        let k = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let l = DVector::from_row_slice(&[1.0, 0.0]);
        let d = bayes_control(&k, &l, &tol(2, 1), None).unwrap();
        assert_eq!(d.tag, CaseTag::TallFullRankInconsistent);
        assert_relative_eq!(d.u[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(d.residual, 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn least_squares_residual_is_minimal_among_probes() {
        let k = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let l = DVector::from_row_slice(&[1.0, 2.0, 0.0]);
        let d = bayes_control(&k, &l, &tol(3, 2), None).unwrap();
        assert_eq!(d.tag, CaseTag::TallFullRankInconsistent);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let probe = DVector::from_fn(2, |_, _| rng.random::<f64>() - 0.5);
            let candidate = &d.u + 0.3 * probe;
            let res = (&k * &candidate - &l).norm();
            assert!(res >= d.residual - 1e-12);
        }
    }

    #[test]
    fn wide_full_rank_takes_the_shortest_solution() {
        let k = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let l = DVector::from_row_slice(&[2.0]);
        let d = bayes_control(&k, &l, &tol(1, 2), None).unwrap();
        assert_eq!(d.tag, CaseTag::WideFullRankMinNorm);
        assert_relative_eq!(d.u[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(d.u[1], 1.0, epsilon = 1e-12);
        assert!(d.residual < 1e-12);
        // Any null-space move lengthens the control: z = t (1, -1).
        for t in [-1.0, -0.1, 0.1, 1.0] {
            let z = DVector::from_row_slice(&[t, -t]);
            assert!((&d.u + z).norm() >= d.u.norm() - 1e-12);
        }
    }

    #[test]
    fn rank_deficient_gain_uses_the_ridge() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let l = DVector::from_row_slice(&[1.0, 1.0]);
        let theta = 1e-3;
        let d = bayes_control(&k, &l, &tol(2, 2), Some(theta)).unwrap();
        assert_eq!(d.tag, CaseTag::RankDeficientRegularized);
        assert_eq!(d.theta_used, Some(theta));
        assert_relative_eq!(d.u[0], 1.0 / (1.0 + theta * theta), epsilon = 1e-12);
        assert_eq!(d.u[1], 0.0);
    }

    #[test]
    fn rank_deficient_without_theta_picks_the_scaled_default() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let l = DVector::from_row_slice(&[1.0, 0.0]);
        let d = bayes_control(&k, &l, &tol(2, 2), None).unwrap();
        assert_eq!(d.theta_used, Some(linalg::default_theta(&k).unwrap()));
    }

    #[test]
    fn ridge_solution_converges_to_the_exact_one() {
        let k = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let l = DVector::from_row_slice(&[1.0, -1.0]);
        let exact = bayes_control(&k, &l, &tol(2, 2), None).unwrap().u;
        let mut last = f64::INFINITY;
        for exp in [2, 4, 6, 8] {
            let theta = 10f64.powi(-exp);
            let ridge = linalg::tikhonov_solve(&k, &l, theta).unwrap();
            let err = (&ridge - &exact).norm();
            assert!(err <= last + 1e-15);
            last = err;
        }
        assert!(last < 1e-12);
    }

    #[test]
    fn all_formulas_agree_on_a_square_nonsingular_gain() {
        let k = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let l = DVector::from_row_slice(&[2.0, -1.0]);
        let t = tol(2, 2);
        let direct = bayes_control(&k, &l, &t, None).unwrap().u;
        let via_pinv = linalg::pinv(&k, &t).unwrap() * &l;
        let via_ridge = linalg::tikhonov_solve(&k, &l, 1e-9).unwrap();
        assert_relative_eq!(direct, via_pinv, epsilon = 1e-10);
        assert_relative_eq!(direct, via_ridge, epsilon = 1e-8);
    }

    #[test]
    fn zero_gain_zero_target_yields_zero_control() {
        let k = DMatrix::from_row_slice(1, 1, &[0.0]);
        let l = DVector::from_row_slice(&[0.0]);
        let d = bayes_control(&k, &l, &tol(1, 1), Some(1e-6)).unwrap();
        assert_eq!(d.tag, CaseTag::RankDeficientRegularized);
        assert_eq!(d.u[0], 0.0);
    }

    #[test]
    fn case_tags_print_their_screaming_names() {
        assert_eq!(CaseTag::FullRankSquare.to_string(), "FULL_RANK_SQUARE");
        assert_eq!(
            CaseTag::RankDeficientRegularized.to_string(),
            "RANK_DEFICIENT_REGULARIZED"
        );
        assert_eq!(CaseTag::WideFullRankMinNorm.to_string(), "WIDE_FULL_RANK_MINNORM");
    }

    fn one_step_instance() -> Scenario {
        let stage = StageData {
            alpha: DMatrix::from_row_slice(1, 1, &[1.0]),
            b: DMatrix::from_row_slice(1, 1, &[1.0]),
            c: DMatrix::from_row_slice(1, 1, &[1.0]),
            s: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            k: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        Scenario::new(
            1,
            1,
            vec![stage.clone(), stage],
            HorizonDist::new(vec![0.0, 1.0]).unwrap(),
            PriorSpec { beta: vec![3.0], scale: vec![1.0], active: 1 },
            DVector::from_row_slice(&[0.0]),
        )
        .unwrap()
    }

    #[test]
    fn policy_first_action_on_the_one_step_instance() {
        let sc = one_step_instance();
        let mut policy = make_policy(&sc, ConstantMode::Derived, None).unwrap();
        let u = policy.act(0, sc.x0()).unwrap();
        assert_relative_eq!(u[0], -0.375, epsilon = 1e-12);
        // Terminal stage never spends control effort.
        let u1 = policy.act(1, &DVector::from_row_slice(&[5.0])).unwrap();
        assert_eq!(u1[0], 0.0);
    }

    #[test]
    fn policy_updates_its_posterior_from_observed_transitions() {
        let sc = one_step_instance();
        let mut policy = make_policy(&sc, ConstantMode::Derived, None).unwrap();
        let x = DVector::from_row_slice(&[0.0]);
        let u = DVector::from_row_slice(&[-0.375]);
        // x' = x + u + v with v = 1.575 implies a new record scale.
        let x_next = DVector::from_row_slice(&[1.2]);
        policy.observe(0, &x, &u, &x_next).unwrap();
        assert_eq!(policy.filter_state().beta()[0], 4.0);
        assert_relative_eq!(policy.filter_state().scale()[0], 1.575, epsilon = 1e-12);
    }

    #[test]
    fn policy_actions_are_deterministic() {
        let sc = one_step_instance();
        let mut a = make_policy(&sc, ConstantMode::Derived, None).unwrap();
        let mut b = make_policy(&sc, ConstantMode::Derived, None).unwrap();
        for x in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            let xa = DVector::from_row_slice(&[x]);
            let ua = a.act(0, &xa).unwrap();
            let ub = b.act(0, &xa).unwrap();
            assert_eq!(ua[0].to_bits(), ub[0].to_bits());
        }
    }

    #[test]
    fn singular_scenario_needs_an_explicit_ridge() {
        let stage = StageData {
            alpha: DMatrix::from_row_slice(1, 1, &[1.0]),
            b: DMatrix::from_row_slice(1, 1, &[1.0]),
            c: DMatrix::from_row_slice(1, 1, &[1.0]),
            s: DMatrix::from_row_slice(2, 2, &[0.0; 4]),
            k: DMatrix::from_row_slice(1, 1, &[0.0]),
        };
        let sc = Scenario::new(
            1,
            1,
            vec![stage.clone(), stage],
            HorizonDist::new(vec![0.0, 1.0]).unwrap(),
            PriorSpec { beta: vec![3.0], scale: vec![1.0], active: 1 },
            DVector::from_row_slice(&[1.0]),
        )
        .unwrap();
        assert!(matches!(
            make_policy(&sc, ConstantMode::Derived, None),
            Err(ControlError::Risk(RiskError::SingularStageGain { stage: 0 }))
        ));
        // With a ridge the policy exists and never moves: there is no cost.
        let mut policy = make_policy(&sc, ConstantMode::Derived, Some(1e-6)).unwrap();
        for n in 0..=1 {
            let u = policy.act(n, &DVector::from_row_slice(&[2.0])).unwrap();
            assert_eq!(u[0], 0.0);
        }
        assert_eq!(policy.coefficients().regularized_stages(), &[0]);
    }

    #[test]
    fn bayes_policy_beats_the_zero_policy() {
        let sc = one_step_instance();
        let base = make_policy(&sc, ConstantMode::Derived, None).unwrap();
        let bayes = crate::sim::estimate_risk(
            &sc,
            || Ok(base.fresh()),
            &crate::sim::LambdaSource::Prior,
            4000,
            21,
        )
        .unwrap();
        let zero = crate::sim::estimate_risk(
            &sc,
            || Ok(crate::sim::ZeroPolicy::new(1)),
            &crate::sim::LambdaSource::Prior,
            4000,
            21,
        )
        .unwrap();
        let pooled = (bayes.se * bayes.se + zero.se * zero.se).sqrt();
        assert!(
            bayes.mean <= zero.mean + 3.0 * pooled,
            "bayes {} vs zero {} (pooled se {})",
            bayes.mean,
            zero.mean,
            pooled
        );
        // The gap is real on this instance: 23/32 against E[v^2] = 1.
        assert!(bayes.mean < zero.mean);
    }

    #[test]
    fn announced_risk_matches_the_value_form() {
        let sc = one_step_instance();
        let policy = make_policy(&sc, ConstantMode::Derived, None).unwrap();
        let w = policy.risk_at(0, sc.x0()).unwrap();
        assert_relative_eq!(w, 23.0 / 32.0, epsilon = 1e-14);
    }
}
