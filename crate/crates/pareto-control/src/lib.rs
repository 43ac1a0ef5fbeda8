//! Bayesian optimal control of linear systems driven by uniform disturbances
//! whose unknown bound carries a Pareto prior.
//!
//! The plant is `x_{n+1} = alpha_n x_n + b_n u_n + c_n v_n` with quadratic
//! stage costs on the augmented vector `(x; lambda)` and on the control,
//! summed to a random horizon. Each disturbance coordinate is uniform on
//! `[0, lambda_i]` with `lambda_i` unknown; Pareto priors stay Pareto under
//! observation, so the posterior is two numbers per coordinate (a shape that
//! grows by one per stage and a scale that is a running maximum) and the
//! optimal control is available in closed form through a backward recursion
//! on quadratic value coefficients.
//!
//! Module map:
//! - [`scenario`]: problem description, validation, JSON serialization.
//! - [`filter`]: the conjugate posterior, predictive moment constants (in
//!   two published variants), disturbance recovery from transitions.
//! - [`risk`]: the backward value recursion, tail-weighted for the random
//!   horizon, exact and ridge-regularized passes.
//! - [`control`]: the stage solve across shape and rank regimes, and the
//!   adaptive closed-loop policy.
//! - [`sim`]: rollouts and deterministic parallel Monte Carlo.
//! - [`oracle`]: independent checks (brute-force conjugacy, quadrature
//!   constants, Bellman residuals, lattice dynamic programming).
//! - [`quadrature`]: adaptive Simpson integration of predictive moments.
//! - [`linalg`]: pseudoinverse, rank, span and ridge helpers with explicit
//!   tolerances.
//!
//! Each major capability has a runnable demonstration under `examples/`:
//! `validate_scenario`, `one_step_control`, `closed_loop_simulation`,
//! `compare_constant_modes`, `singular_control_cases`, `grid_oracle_check`,
//! and `generalized_system`.

pub mod control;
pub mod filter;
pub mod linalg;
pub mod oracle;
pub mod quadrature;
pub mod risk;
pub mod scenario;
pub mod sim;

pub use control::{bayes_control, classify_case, make_policy, BayesPolicy, CaseTag, ControlDecision, ControlError};
pub use filter::{
    init_filter, posterior_moments, predictive_constants, predictive_density, recover_disturbance,
    scalar_constants, update_posterior, ConstantMode, FilterError, FilterState, MomentConstants,
    PosteriorMoments,
};
pub use linalg::{default_theta, in_colspan, pinv, rank_of, tikhonov_solve, LinalgError, Tolerance};
pub use oracle::{
    bellman_check, bellman_rhs, conjugacy_check, constant_comparison, default_beta_grid,
    grid_oracle_policy, BellmanCheck, ConjugacyReport, ConstantRow, GridOraclePolicy, GridSpec,
    OracleError, CONSTANT_TOL,
};
pub use quadrature::{pareto_moment, predictive_moment, PredictiveIntegrand, QuadratureError};
pub use risk::{
    backward_coefficients, backward_coefficients_regularized, bayes_risk_value, stage_gain,
    RiskCoeffs, RiskError, StageGain,
};
pub use scenario::{
    load_scenario, save_scenario, scenario_from_json, scenario_to_json, HorizonDist, PriorSpec,
    Scenario, ScenarioError, StageData,
};
pub use sim::{
    estimate_risk, pareto_draw, predictive_draw, rollout, LambdaSource, Policy, SimError,
    SimReport, Trajectory, ZeroPolicy,
};
