//! Independent cross-checks for the analytic machinery.
//!
//! Everything here deliberately avoids the closed forms under test: the
//! conjugacy check normalizes the posterior numerically, the constant table
//! integrates predictive moments by quadrature, the Bellman check minimizes
//! the one-step objective over a refined control grid, and the grid oracle
//! solves the whole problem by brute-force dynamic programming on a state
//! lattice. Agreement between these routes and the recursion is the evidence
//! that the recursion is right.

use crate::filter::{scalar_constants, ConstantMode, FilterError};
use crate::quadrature::{adaptive_simpson, predictive_moment, PredictiveIntegrand, QuadratureError};
use crate::risk::{bayes_risk_value, RiskCoeffs, RiskError};
use crate::scenario::Scenario;
use crate::sim::{Policy, SimError};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid oracle handles scalar systems only (m = r = 1); got m = {m}, r = {r}")]
    NotScalar { m: usize, r: usize },
    #[error("grid oracle is limited to horizons with at most {limit} stages; got {found}")]
    TooManyStages { limit: usize, found: usize },
    #[error("bad grid: {context}")]
    BadGrid { context: String },
    #[error("stage {stage}: query {value} left the {axis} lattice [{lo}, {hi}]; widen the grid")]
    StateOffGrid {
        stage: usize,
        axis: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("shape must exceed 2, got {beta}")]
    ShapeTooSmall { beta: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

const STAGE_LIMIT: usize = 3;

/// Worst pointwise deviations of the numerically normalized posterior from
/// the closed-form conjugate update.
#[derive(Debug, Clone, Copy)]
pub struct ConjugacyReport {
    pub max_density_err: f64,
    pub max_cdf_err: f64,
}

/// Brute-force check of the conjugate update for one observation.
///
/// The prior density is proportional to `lambda^-(beta+1)` on `[r, inf)` and
/// a uniform observation `v` multiplies in a factor `1/lambda` on
/// `lambda >= v`, so the unnormalized posterior is `lambda^-(beta+2)` on
/// `[max(r, v), inf)`. That is normalized here by quadrature alone (log
/// substitution, truncation below 1e-30 of the mass) and compared pointwise,
/// in density and in CDF, against the claimed conjugate answer: a Pareto
/// density with shape `beta + 1` and scale `max(r, v)`.
pub fn conjugacy_check(beta: f64, r: f64, v: f64, samples: usize) -> Result<ConjugacyReport, OracleError> {
    if !(beta > 2.0) {
        return Err(OracleError::ShapeTooSmall { beta });
    }
    if !(r > 0.0) || !(v >= 0.0) {
        return Err(OracleError::BadGrid {
            context: format!("conjugacy check needs r > 0 and v >= 0, got r = {r}, v = {v}"),
        });
    }
    let m0 = r.max(v);
    let shape = beta + 1.0;
    // With lambda = m0 e^s the mass integral becomes
    // m0^-(beta+1) * int_0^L exp(-(beta+1) s) ds; L puts the tail below 1e-30.
    let l_max = 30.0 * std::f64::consts::LN_10 / shape;
    let mass_s = adaptive_simpson(&|s: f64| (-shape * s).exp(), 0.0, l_max, 1e-14);
    let z = m0.powf(-shape) * mass_s;

    let mut report = ConjugacyReport {
        max_density_err: 0.0,
        max_cdf_err: 0.0,
    };
    for j in 0..samples.max(2) {
        let lambda = m0 * 1.35f64.powi(j as i32);
        let numeric_pdf = lambda.powf(-(beta + 2.0)) / z;
        let conjugate_pdf = shape * m0.powf(shape) * lambda.powf(-(beta + 2.0));
        let density_err = (numeric_pdf / conjugate_pdf - 1.0).abs();

        let upper = (lambda / m0).ln();
        let head = adaptive_simpson(&|s: f64| (-shape * s).exp(), 0.0, upper, 1e-14);
        let numeric_cdf = m0.powf(-shape) * head / z;
        let conjugate_cdf = 1.0 - (m0 / lambda).powf(shape);
        let cdf_err = (numeric_cdf - conjugate_cdf).abs();

        report.max_density_err = report.max_density_err.max(density_err);
        report.max_cdf_err = report.max_cdf_err.max(cdf_err);
    }
    Ok(report)
}

/// One constant compared against its defining predictive moment.
#[derive(Debug, Clone)]
pub struct ConstantRow {
    pub beta: f64,
    pub name: &'static str,
    pub printed: f64,
    pub derived: f64,
    pub quadrature: f64,
    pub printed_ok: bool,
    pub derived_ok: bool,
}

const CONSTANT_NAMES: [&str; 5] = ["Q", "Q1", "Q2", "Q3", "Q4"];

/// Absolute agreement demanded between a closed-form constant and quadrature.
pub const CONSTANT_TOL: f64 = 1e-10;

/// Compare both published constant sets against quadrature at one shape.
///
/// The defining moments, at an arbitrary scale `r` that the result must not
/// depend on: `E[v] = Q r`, `E[v^2] = Q1 r^2`, `E[max(r,v)] = Q2 r`,
/// `E[max(r,v)^2] = Q3 r^2`, `E[v max(r,v)] = Q4 r^2`.
pub fn constant_comparison(beta: f64) -> Result<Vec<ConstantRow>, OracleError> {
    let r = 1.3;
    let printed = scalar_constants(beta, ConstantMode::Printed)?;
    let derived = scalar_constants(beta, ConstantMode::Derived)?;
    let moments = [
        predictive_moment(beta, r, PredictiveIntegrand::V)? / r,
        predictive_moment(beta, r, PredictiveIntegrand::V2)? / (r * r),
        predictive_moment(beta, r, PredictiveIntegrand::Max)? / r,
        predictive_moment(beta, r, PredictiveIntegrand::Max2)? / (r * r),
        predictive_moment(beta, r, PredictiveIntegrand::VMax)? / (r * r),
    ];
    let mut rows = Vec::with_capacity(5);
    for i in 0..5 {
        let quad = moments[i];
        let denom = quad.abs().max(1.0);
        rows.push(ConstantRow {
            beta,
            name: CONSTANT_NAMES[i],
            printed: printed[i],
            derived: derived[i],
            quadrature: quad,
            printed_ok: (printed[i] - quad).abs() <= CONSTANT_TOL * denom,
            derived_ok: (derived[i] - quad).abs() <= CONSTANT_TOL * denom,
        });
    }
    Ok(rows)
}

/// The default shape grid used by the comparison commands.
pub fn default_beta_grid() -> Vec<f64> {
    vec![2.1, 2.5, 3.0, 5.0, 10.0]
}

fn scalar_check(sc: &Scenario) -> Result<(), OracleError> {
    if sc.state_dim() != 1 || sc.row_count() != 1 {
        return Err(OracleError::NotScalar {
            m: sc.state_dim(),
            r: sc.row_count(),
        });
    }
    if sc.prior().active != 1 {
        return Err(OracleError::BadGrid {
            context: "scalar checks need exactly one active disturbance coordinate".into(),
        });
    }
    Ok(())
}

/// One-step objective of the recursion at stage `n`, state `x`, posterior
/// scale `rbar`, control `u`: realized stage cost plus the tail-weighted
/// predictive expectation of the next value form, everything evaluated by
/// quadrature rather than the closed-form coefficients.
pub fn bellman_rhs(
    sc: &Scenario,
    rc: &RiskCoeffs,
    n: usize,
    x: f64,
    rbar: f64,
    u: f64,
) -> Result<f64, OracleError> {
    scalar_check(sc)?;
    if n >= sc.max_stage() {
        return Err(OracleError::BadGrid {
            context: format!("one-step check needs a continuation stage, got n = {n}"),
        });
    }
    if !(rbar > 0.0) {
        return Err(OracleError::BadGrid {
            context: format!("posterior scale must be positive, got {rbar}"),
        });
    }
    let st = sc.stage(n);
    let beta = sc.prior().beta[0] + n as f64;
    if !(beta > 2.0) {
        return Err(OracleError::ShapeTooSmall { beta });
    }
    let t = beta / (beta - 1.0);
    let t1 = beta / (beta - 2.0);
    let (s_xx, s_xl, s_ll) = (st.s[(0, 0)], st.s[(0, 1)], st.s[(1, 1)]);
    let k = st.k[(0, 0)];
    let stage_cost = s_xx * x * x + 2.0 * s_xl * t * rbar * x + s_ll * t1 * rbar * rbar + k * u * u;

    let (alpha, b, c) = (st.alpha[(0, 0)], st.b[(0, 0)], st.c[(0, 0)]);
    let w = alpha * x + b * u;
    let (a_next, b_next, c_next) = rc.coefficients(n + 1)?;
    let (a2, b2, c2) = (a_next[(0, 0)], b_next[(0, 0)], c_next[(0, 0)]);
    let next_value = move |xp: f64, rp: f64| a2 * xp * xp + 2.0 * rp * b2 * xp + 2.0 * c2 * rp * rp;

    // Predictive density: flat at beta/((beta+1) rbar) below rbar, power tail
    // above. Head and mid integrals by adaptive Simpson, far tail in closed
    // form from the polynomial expansion of the next value in v.
    let scale_hint = 1.0 + stage_cost.abs() + next_value(w.abs() + c.abs() * rbar, rbar).abs();
    let tol = 1e-13 * scale_hint;
    let head_density = beta / ((beta + 1.0) * rbar);
    let head = head_density
        * adaptive_simpson(&|v: f64| next_value(w + c * v, rbar), 0.0, rbar, tol);
    let tail_coeff = beta * rbar.powf(beta) / (beta + 1.0);
    let mid = adaptive_simpson(
        &|v: f64| next_value(w + c * v, v) * tail_coeff * v.powf(-beta - 1.0),
        rbar,
        10.0 * rbar,
        tol,
    );
    // next_value(w + c v, v) = p0 + p1 v + p2 v^2.
    let p0 = a2 * w * w;
    let p1 = 2.0 * a2 * w * c + 2.0 * b2 * w;
    let p2 = a2 * c * c + 2.0 * b2 * c + 2.0 * c2;
    let x_cut = 10.0 * rbar;
    let far = tail_coeff
        * (p0 * x_cut.powf(-beta) / beta
            + p1 * x_cut.powf(1.0 - beta) / (beta - 1.0)
            + p2 * x_cut.powf(2.0 - beta) / (beta - 2.0));

    let ratio = rc.tail_mass(n + 1) / rc.tail_mass(n);
    Ok(stage_cost + ratio * (head + mid + far))
}

/// Result of checking one Bellman step by quadrature and grid minimization.
#[derive(Debug, Clone, Copy)]
pub struct BellmanCheck {
    /// The recursion's value `W_n(x, rbar)`.
    pub value: f64,
    /// The independently minimized one-step objective.
    pub best_rhs: f64,
    /// `|value - best_rhs|`.
    pub residual: f64,
    /// Argmin of the one-step objective on the final refinement grid.
    pub minimizer: f64,
}

/// Verify one Bellman step of the recursion at `(n, x, rbar)` by minimizing
/// [`bellman_rhs`] over a control grid refined around its argmin.
pub fn bellman_check(
    sc: &Scenario,
    rc: &RiskCoeffs,
    n: usize,
    x: f64,
    rbar: f64,
) -> Result<BellmanCheck, OracleError> {
    let value = bayes_risk_value(
        rc,
        n,
        &DVector::from_row_slice(&[x]),
        &DVector::from_row_slice(&[rbar]),
    )?;
    let span = 20.0 * (1.0 + x.abs() + rbar);
    let (mut lo, mut hi) = (-span, span);
    let pts = 241usize;
    let mut best_u = 0.0f64;
    let mut best_rhs = f64::INFINITY;
    for _pass in 0..6 {
        let step = (hi - lo) / (pts - 1) as f64;
        best_rhs = f64::INFINITY;
        for i in 0..pts {
            let u = lo + step * i as f64;
            let rhs = bellman_rhs(sc, rc, n, x, rbar, u)?;
            if rhs < best_rhs || (rhs == best_rhs && u.abs() < best_u.abs()) {
                best_rhs = rhs;
                best_u = u;
            }
        }
        lo = best_u - 2.0 * step;
        hi = best_u + 2.0 * step;
    }
    Ok(BellmanCheck {
        value,
        best_rhs,
        residual: (value - best_rhs).abs(),
        minimizer: best_u,
    })
}

/// Lattice description for the brute-force dynamic program.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    pub x_pts: usize,
    /// The scale grid runs geometrically from the prior scale to
    /// `prior scale * r_factor`.
    pub r_factor: f64,
    pub r_pts: usize,
    pub u_lo: f64,
    pub u_hi: f64,
    pub u_pts: usize,
    /// Simpson panel counts for the flat and tail parts of the predictive
    /// expectation; both must be even.
    pub head_panels: usize,
    pub tail_panels: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            x_lo: -8.0,
            x_hi: 8.0,
            x_pts: 161,
            r_factor: 50.0,
            r_pts: 36,
            u_lo: -6.0,
            u_hi: 6.0,
            u_pts: 241,
            head_panels: 32,
            tail_panels: 32,
        }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<(), OracleError> {
        let bad = |context: String| Err(OracleError::BadGrid { context });
        if !(self.x_lo < self.x_hi) || self.x_pts < 3 {
            return bad(format!("state grid [{}, {}] with {} points", self.x_lo, self.x_hi, self.x_pts));
        }
        if !(self.r_factor > 1.0) || self.r_pts < 2 {
            return bad(format!("scale grid factor {} with {} points", self.r_factor, self.r_pts));
        }
        if !(self.u_lo < self.u_hi) || self.u_pts < 3 {
            return bad(format!("control grid [{}, {}] with {} points", self.u_lo, self.u_hi, self.u_pts));
        }
        if self.head_panels < 2 || self.head_panels % 2 != 0 || self.tail_panels < 2 || self.tail_panels % 2 != 0 {
            return bad(format!("Simpson panels {}/{} must be even and at least 2", self.head_panels, self.tail_panels));
        }
        Ok(())
    }
}

struct OracleTables {
    x_grid: Vec<f64>,
    r_grid: Vec<f64>,
    /// Value per stage on the lattice, states along rows.
    values: Vec<DMatrix<f64>>,
    /// Minimizing control per stage on the lattice.
    controls: Vec<DMatrix<f64>>,
    stages: Vec<(f64, f64, f64)>,
    r0: f64,
}

/// Locate `x` in a sorted grid: the left node index, the interpolation
/// weight toward the right node, and whether clamping was needed.
fn bracket(grid: &[f64], x: f64) -> (usize, f64, bool) {
    let n = grid.len();
    if x <= grid[0] {
        return (0, 0.0, x < grid[0]);
    }
    if x >= grid[n - 1] {
        return (n - 2, 1.0, x > grid[n - 1]);
    }
    let mut lo = 0;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if grid[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = (x - grid[lo]) / (grid[lo + 1] - grid[lo]);
    (lo, t, false)
}

fn bilinear(table: &DMatrix<f64>, x_grid: &[f64], r_grid: &[f64], x: f64, r: f64) -> (f64, bool) {
    let (i, tx, cx) = bracket(x_grid, x);
    let (j, tr, cr) = bracket(r_grid, r);
    let v = table[(i, j)] * (1.0 - tx) * (1.0 - tr)
        + table[(i + 1, j)] * tx * (1.0 - tr)
        + table[(i, j + 1)] * (1.0 - tx) * tr
        + table[(i + 1, j + 1)] * tx * tr;
    (v, cx || cr)
}

/// Linear interpolation along x at an exact scale-grid column.
fn column_interp(table: &DMatrix<f64>, x_grid: &[f64], j: usize, x: f64) -> f64 {
    let (i, t, _) = bracket(x_grid, x);
    table[(i, j)] * (1.0 - t) + table[(i + 1, j)] * t
}

fn composite_simpson(values: &[f64], h: f64) -> f64 {
    let panels = values.len() - 1;
    let mut acc = values[0] + values[panels];
    for (idx, v) in values.iter().enumerate().take(panels).skip(1) {
        acc += if idx % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

impl OracleTables {
    /// Predictive expectation of the next-stage value from post-control
    /// position `w`, at scale node `j`, by Simpson panels on the flat part
    /// and on the substituted tail `t = (r/v)^beta` (which makes the tail
    /// measure exactly `dt / (beta + 1)` on the unit interval).
    fn expectation(
        &self,
        next: &DMatrix<f64>,
        beta: f64,
        j: usize,
        w: f64,
        c: f64,
        head_panels: usize,
        tail_panels: usize,
    ) -> f64 {
        let rbar = self.r_grid[j];
        let r_cap = 1e6 * self.r_grid[self.r_grid.len() - 1];

        let h = rbar / head_panels as f64;
        let mut head_vals = Vec::with_capacity(head_panels + 1);
        for idx in 0..=head_panels {
            let v = h * idx as f64;
            head_vals.push(column_interp(next, &self.x_grid, j, w + c * v));
        }
        let head = beta / ((beta + 1.0) * rbar) * composite_simpson(&head_vals, h);

        let ht = 1.0 / tail_panels as f64;
        let mut tail_vals = Vec::with_capacity(tail_panels + 1);
        for idx in 0..=tail_panels {
            let t = ht * idx as f64;
            let v = if t == 0.0 {
                r_cap
            } else {
                (rbar * t.powf(-1.0 / beta)).min(r_cap)
            };
            let (val, _) = bilinear(next, &self.x_grid, &self.r_grid, w + c * v, v);
            tail_vals.push(val);
        }
        let tail = composite_simpson(&tail_vals, ht) / (beta + 1.0);

        head + tail
    }
}

/// A policy computed by brute-force dynamic programming on a state lattice.
///
/// Scalar systems with at most three transitions only: the cost of the sweep
/// grows with the product of all grid sizes. Action lookups snap to the
/// nearest lattice node; a query outside the lattice is an error, and the
/// caller is expected to widen the grids until that stops happening.
#[derive(Clone)]
pub struct GridOraclePolicy {
    tables: Arc<OracleTables>,
    head_panels: usize,
    tail_panels: usize,
    rbar: f64,
}

/// Solve the scenario by backward induction on the lattice described by
/// `spec`. Stage shapes follow the deterministic schedule, values between
/// lattice nodes are bilinear, and continuation beyond the lattice clamps to
/// the boundary (a deliberate, recorded bias kept small by generous grids).
pub fn grid_oracle_policy(sc: &Scenario, spec: &GridSpec) -> Result<GridOraclePolicy, OracleError> {
    scalar_check(sc)?;
    spec.validate()?;
    let last = sc.max_stage();
    if last > STAGE_LIMIT {
        return Err(OracleError::TooManyStages {
            limit: STAGE_LIMIT,
            found: last,
        });
    }
    for n in 0..last {
        if sc.stage(n).c[(0, 0)].abs() < 1e-12 {
            return Err(OracleError::BadGrid {
                context: format!("stage {n} has a vanishing disturbance channel; the oracle cannot track the scale"),
            });
        }
    }
    let beta0 = sc.prior().beta[0];
    let r0 = sc.prior().scale[0];

    let x_grid: Vec<f64> = (0..spec.x_pts)
        .map(|i| spec.x_lo + (spec.x_hi - spec.x_lo) * i as f64 / (spec.x_pts - 1) as f64)
        .collect();
    let r_grid: Vec<f64> = (0..spec.r_pts)
        .map(|j| r0 * spec.r_factor.powf(j as f64 / (spec.r_pts - 1) as f64))
        .collect();

    let mut tables = OracleTables {
        x_grid,
        r_grid,
        values: vec![DMatrix::zeros(spec.x_pts, spec.r_pts); last + 1],
        controls: vec![DMatrix::zeros(spec.x_pts, spec.r_pts); last + 1],
        stages: (0..=last)
            .map(|n| {
                let st = sc.stage(n);
                (st.alpha[(0, 0)], st.b[(0, 0)], st.c[(0, 0)])
            })
            .collect(),
        r0,
    };

    // Terminal stage: control only adds cost, so u = 0 and the value is the
    // posterior stage cost.
    {
        let st = sc.stage(last);
        let beta = beta0 + last as f64;
        let (t, t1) = (beta / (beta - 1.0), beta / (beta - 2.0));
        let (s_xx, s_xl, s_ll) = (st.s[(0, 0)], st.s[(0, 1)], st.s[(1, 1)]);
        for i in 0..spec.x_pts {
            for j in 0..spec.r_pts {
                let (x, r) = (tables.x_grid[i], tables.r_grid[j]);
                tables.values[last][(i, j)] =
                    s_xx * x * x + 2.0 * s_xl * t * r * x + s_ll * t1 * r * r;
            }
        }
    }

    for n in (0..last).rev() {
        let st = sc.stage(n);
        let beta = beta0 + n as f64;
        let (t, t1) = (beta / (beta - 1.0), beta / (beta - 2.0));
        let (s_xx, s_xl, s_ll) = (st.s[(0, 0)], st.s[(0, 1)], st.s[(1, 1)]);
        let k = st.k[(0, 0)];
        let (alpha, b, c) = tables.stages[n];
        let ratio = sc.horizon().tail_mass(n + 1) / sc.horizon().tail_mass(n);
        let u_step = (spec.u_hi - spec.u_lo) / (spec.u_pts - 1) as f64;
        let next = tables.values[n + 1].clone();

        let mut value = DMatrix::zeros(spec.x_pts, spec.r_pts);
        let mut control = DMatrix::zeros(spec.x_pts, spec.r_pts);
        for i in 0..spec.x_pts {
            let x = tables.x_grid[i];
            for j in 0..spec.r_pts {
                let r = tables.r_grid[j];
                let fixed = s_xx * x * x + 2.0 * s_xl * t * r * x + s_ll * t1 * r * r;
                let mut best = f64::INFINITY;
                let mut best_u = 0.0f64;
                for iu in 0..spec.u_pts {
                    let u = spec.u_lo + u_step * iu as f64;
                    let w = alpha * x + b * u;
                    let cont = tables.expectation(
                        &next,
                        beta,
                        j,
                        w,
                        c,
                        spec.head_panels,
                        spec.tail_panels,
                    );
                    let total = fixed + k * u * u + ratio * cont;
                    if total < best || (total == best && u.abs() < best_u.abs()) {
                        best = total;
                        best_u = u;
                    }
                }
                value[(i, j)] = best;
                control[(i, j)] = best_u;
            }
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::BadGrid {
                context: format!("stage {n} produced non-finite lattice values"),
            });
        }
        tables.values[n] = value;
        tables.controls[n] = control;
    }

    Ok(GridOraclePolicy {
        tables: Arc::new(tables),
        head_panels: spec.head_panels,
        tail_panels: spec.tail_panels,
        rbar: r0,
    })
}

impl GridOraclePolicy {
    /// A copy with the posterior reset to the prior, for fresh replications.
    pub fn fresh(&self) -> GridOraclePolicy {
        GridOraclePolicy {
            tables: Arc::clone(&self.tables),
            head_panels: self.head_panels,
            tail_panels: self.tail_panels,
            rbar: self.tables.r0,
        }
    }

    /// Interpolated lattice value at `(n, x, r)`, clamped at the boundary.
    /// Diagnostic only; the policy itself refuses off-lattice queries.
    pub fn value(&self, n: usize, x: f64, r: f64) -> Result<f64, OracleError> {
        if n >= self.tables.values.len() {
            return Err(OracleError::BadGrid {
                context: format!("stage {n} beyond the lattice horizon"),
            });
        }
        let (v, _) = bilinear(&self.tables.values[n], &self.tables.x_grid, &self.tables.r_grid, x, r);
        Ok(v)
    }

    /// Minimizing control at the lattice node nearest to `(x, tracked scale)`.
    pub fn control_at(&self, n: usize, x: f64) -> Result<f64, OracleError> {
        if n >= self.tables.controls.len() {
            return Err(OracleError::BadGrid {
                context: format!("stage {n} beyond the lattice horizon"),
            });
        }
        let x_grid = &self.tables.x_grid;
        let r_grid = &self.tables.r_grid;
        if x < x_grid[0] || x > x_grid[x_grid.len() - 1] {
            return Err(OracleError::StateOffGrid {
                stage: n,
                axis: "state",
                value: x,
                lo: x_grid[0],
                hi: x_grid[x_grid.len() - 1],
            });
        }
        if self.rbar > r_grid[r_grid.len() - 1] {
            return Err(OracleError::StateOffGrid {
                stage: n,
                axis: "scale",
                value: self.rbar,
                lo: r_grid[0],
                hi: r_grid[r_grid.len() - 1],
            });
        }
        let (i, tx, _) = bracket(x_grid, x);
        let (j, tr, _) = bracket(r_grid, self.rbar);
        let ix = if tx < 0.5 { i } else { i + 1 };
        let jr = if tr < 0.5 { j } else { j + 1 };
        Ok(self.tables.controls[n][(ix, jr)])
    }
}

impl Policy for GridOraclePolicy {
    fn act(&mut self, n: usize, x: &DVector<f64>) -> Result<DVector<f64>, SimError> {
        if x.len() != 1 {
            return Err(SimError::DimensionMismatch {
                context: format!("grid oracle is scalar, got a state of length {}", x.len()),
            });
        }
        let u = self
            .control_at(n, x[0])
            .map_err(|e| SimError::PolicyFailure { context: e.to_string() })?;
        Ok(DVector::from_row_slice(&[u]))
    }

    fn observe(
        &mut self,
        n: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
    ) -> Result<(), SimError> {
        let (alpha, b, c) = self.tables.stages[n];
        let mut v = (x_next[0] - alpha * x[0] - b * u[0]) / c;
        if v < 0.0 {
            if v < -1e-6 * (1.0 + self.rbar) {
                return Err(SimError::PolicyFailure {
                    context: format!("recovered disturbance {v} is negative at stage {n}"),
                });
            }
            v = 0.0;
        }
        self.rbar = self.rbar.max(v);
        Ok(())
    }
}
