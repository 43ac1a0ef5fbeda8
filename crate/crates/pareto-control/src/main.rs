//! Command-line front end: validate scenario files, tabulate value
//! coefficients and stage gains, run closed-loop Monte Carlo experiments,
//! and cross-check the moment constants and the recursion against
//! quadrature. Reports are plain CSV with `# key=value` comment lines.
//!
//! Exit codes: 0 success, 1 usage, 2 scenario validation, 3 numerical.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use pareto_control::{
    backward_coefficients, backward_coefficients_regularized, bellman_check, conjugacy_check,
    constant_comparison, default_beta_grid, estimate_risk, load_scenario, make_policy,
    ConstantMode, ControlError, LambdaSource, RiskCoeffs, RiskError, Scenario, SimError,
    CONSTANT_TOL,
};

/// Maximum conjugate-update error tolerated by `oracle-check`.
const CONJUGACY_TOL: f64 = 1e-8;

/// Bayesian control of linear systems driven by uniform noise with an
/// unknown, Pareto-distributed bound.
#[derive(Parser)]
#[command(name = "pareto-control", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// The moment constants exactly as published.
    Printed,
    /// The constants re-derived from the predictive density (default).
    Derived,
}

impl From<Mode> for ConstantMode {
    fn from(mode: Mode) -> ConstantMode {
        match mode {
            Mode::Printed => ConstantMode::Printed,
            Mode::Derived => ConstantMode::Derived,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load a scenario file, run every structural check, print a summary.
    Validate {
        /// Scenario description (JSON).
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run the backward recursion and tabulate A, B, C and the stage gains.
    Coeffs {
        /// Scenario description (JSON).
        #[arg(long)]
        scenario: PathBuf,
        /// Which constants drive the recursion.
        #[arg(long, value_enum, default_value_t = Mode::Derived)]
        mode: Mode,
        /// Ridge parameter; unlocks the regularized recursion when a stage
        /// gain is singular.
        #[arg(long)]
        theta: Option<f64>,
        /// Report file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the closed-loop risk of the Bayes policy by Monte Carlo.
    Simulate {
        /// Scenario description (JSON).
        #[arg(long)]
        scenario: PathBuf,
        /// Independent replications to average.
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        reps: u64,
        /// Master seed; replication i runs on stream i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Which constants drive the recursion.
        #[arg(long, value_enum, default_value_t = Mode::Derived)]
        mode: Mode,
        /// Ridge parameter; unlocks the regularized recursion when a stage
        /// gain is singular.
        #[arg(long)]
        theta: Option<f64>,
        /// Report file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the printed and derived constants against quadrature.
    CompareModes {
        /// Optional scenario whose prior shapes join the default grid.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Report file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check conjugacy, the constants, and the value recursion.
    OracleCheck {
        /// Scenario description (JSON).
        #[arg(long)]
        scenario: PathBuf,
        /// Report file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Validation(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Validation(m) | Failure::Numerical(m) => m,
        }
    }
}

fn numerical<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Numerical(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's exit conventions differ from ours: help and version are
            // successes, anything else is a usage error.
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Coeffs { scenario, mode, theta, out } => {
            cmd_coeffs(&scenario, mode, theta, out.as_deref())
        }
        Command::Simulate { scenario, reps, seed, mode, theta, out } => {
            cmd_simulate(&scenario, reps, seed, mode, theta, out.as_deref())
        }
        Command::CompareModes { scenario, out } => {
            cmd_compare_modes(scenario.as_deref(), out.as_deref())
        }
        Command::OracleCheck { scenario, out } => cmd_oracle_check(&scenario, out.as_deref()),
    }
}

/// A CSV report: comment lines, one header row, then data rows.
struct Report {
    comments: Vec<String>,
    header: &'static str,
    rows: Vec<String>,
}

impl Report {
    fn new(header: &'static str) -> Report {
        Report { comments: Vec::new(), header, rows: Vec::new() }
    }

    fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.comments.push(format!("{key}={value}"));
    }

    fn row(&mut self, cells: &[String]) {
        self.rows.push(cells.join(","));
    }

    /// Write to `out`, or stdout when no path is given. A report with no
    /// data rows is refused before anything is created.
    fn deliver(&self, out: Option<&Path>) -> Result<(), Failure> {
        if self.rows.is_empty() {
            return Err(Failure::Usage("refusing to write a report with no data rows".into()));
        }
        let mut text = String::new();
        for comment in &self.comments {
            text.push_str("# ");
            text.push_str(comment);
            text.push('\n');
        }
        text.push_str(self.header);
        text.push('\n');
        for row in &self.rows {
            text.push_str(row);
            text.push('\n');
        }
        match out {
            Some(path) => fs::write(path, &text)
                .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

/// 17 significant digits; every finite f64 round-trips through this exactly.
fn csv_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    load_scenario(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn check_theta(theta: Option<f64>) -> Result<(), Failure> {
    match theta {
        Some(t) if !(t.is_finite() && t > 0.0) => {
            Err(Failure::Usage(format!("--theta must be positive and finite, got {t}")))
        }
        _ => Ok(()),
    }
}

fn theta_label(theta: Option<f64>) -> String {
    theta.map_or_else(|| "none".to_string(), csv_f64)
}

fn stages_label(stages: &[usize]) -> String {
    if stages.is_empty() {
        "none".to_string()
    } else {
        stages.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
    }
}

fn completion_label(sc: &Scenario) -> String {
    if sc.is_square() {
        "square".to_string()
    } else {
        format!("minimum-norm (r={} rows, m={} states)", sc.row_count(), sc.state_dim())
    }
}

/// Exact backward pass, falling back to the ridge only when a stage gain is
/// singular and a theta was supplied. Mirrors the policy construction.
fn recursion(sc: &Scenario, mode: ConstantMode, theta: Option<f64>) -> Result<RiskCoeffs, Failure> {
    match backward_coefficients(sc, mode) {
        Ok(rc) => Ok(rc),
        Err(RiskError::SingularStageGain { stage }) => match theta {
            Some(t) => backward_coefficients_regularized(sc, mode, t).map_err(numerical),
            None => Err(Failure::Numerical(format!(
                "stage {stage} gain is singular under the exact recursion; pass --theta to use the ridge"
            ))),
        },
        Err(e) => Err(numerical(e)),
    }
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let sc = load(path)?;
    let shape = if sc.is_square() {
        "square"
    } else {
        "generalized, stepped by minimum-norm completion"
    };
    println!("scenario: {}", path.display());
    println!("state dim m={}, equation rows r={} ({shape})", sc.state_dim(), sc.row_count());
    println!("stages 0..={}, final-stage probability {}", sc.max_stage(), sc.horizon().probs()[sc.max_stage()]);
    let tails: Vec<String> =
        (0..=sc.max_stage()).map(|n| format!("{}", sc.horizon().tail_mass(n))).collect();
    println!("horizon tail mass: {}", tails.join(" "));
    let prior = sc.prior();
    println!(
        "prior: beta={:?}, scale={:?}, active {} of {} disturbance coordinates",
        prior.beta,
        prior.scale,
        prior.active,
        sc.state_dim()
    );
    println!("x0: {:?}", sc.x0().as_slice());
    println!("ok");
    Ok(())
}

fn cmd_coeffs(
    path: &Path,
    mode: Mode,
    theta: Option<f64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    check_theta(theta)?;
    let sc = load(path)?;
    let reduced = sc.reduced();
    let rc = recursion(&reduced, mode.into(), theta)?;
    let mut report = Report::new("stage,name,row,col,value");
    report.note("mode", ConstantMode::from(mode));
    report.note("theta", theta_label(theta));
    report.note("completion", completion_label(&sc));
    report.note("regularized_stages", stages_label(rc.regularized_stages()));
    for n in 0..=reduced.max_stage() {
        let (a, b, c) = rc.coefficients(n).map_err(numerical)?;
        let k = rc.gain_matrix(&reduced, n).map_err(numerical)?;
        for (name, mat) in [("A", &a), ("B", &b), ("C", &c), ("K", &k)] {
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    report.row(&[
                        n.to_string(),
                        name.to_string(),
                        i.to_string(),
                        j.to_string(),
                        csv_f64(mat[(i, j)]),
                    ]);
                }
            }
        }
    }
    report.deliver(out)
}

fn cmd_simulate(
    path: &Path,
    reps: u64,
    seed: u64,
    mode: Mode,
    theta: Option<f64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    check_theta(theta)?;
    let sc = load(path)?;
    let policy = make_policy(&sc, mode.into(), theta).map_err(|e| match &e {
        ControlError::Risk(RiskError::SingularStageGain { .. }) => Failure::Numerical(format!(
            "{e}; pass --theta to use the ridge recursion"
        )),
        _ => Failure::Numerical(e.to_string()),
    })?;
    let sim = estimate_risk(&sc, || Ok(policy.fresh()), &LambdaSource::Prior, reps, seed)
        .map_err(|e| match e {
            SimError::TooFewReps { .. } => Failure::Usage(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        })?;
    let mut report = Report::new("mean,se,reps,seed");
    report.note("mode", ConstantMode::from(mode));
    report.note("theta", theta_label(theta));
    report.note("completion", completion_label(&sc));
    report.note("regularized_stages", stages_label(policy.coefficients().regularized_stages()));
    report.note("max_step_residual", csv_f64(sim.max_step_residual));
    report.row(&[
        csv_f64(sim.mean),
        csv_f64(sim.se),
        sim.reps.to_string(),
        sim.seed.to_string(),
    ]);
    report.deliver(out)
}

/// Every shape the recursion will actually evaluate: each active prior shape
/// advanced by one per stage.
fn scenario_shapes(sc: &Scenario) -> Vec<f64> {
    let prior = sc.prior();
    let mut shapes = Vec::new();
    for i in 0..prior.active {
        for n in 0..=sc.max_stage() {
            shapes.push(prior.beta[i] + n as f64);
        }
    }
    shapes.sort_by(f64::total_cmp);
    shapes.dedup();
    shapes
}

fn cmd_compare_modes(scenario: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let mut betas = default_beta_grid();
    if let Some(path) = scenario {
        betas.extend(scenario_shapes(&load(path)?));
    }
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let mut report = Report::new("beta,name,printed,derived,quadrature,printed_ok,derived_ok");
    report.note("tol", csv_f64(CONSTANT_TOL));
    let mut derived_broken = false;
    for beta in betas {
        for row in constant_comparison(beta).map_err(numerical)? {
            derived_broken |= !row.derived_ok;
            report.row(&[
                csv_f64(row.beta),
                row.name.to_string(),
                csv_f64(row.printed),
                csv_f64(row.derived),
                csv_f64(row.quadrature),
                row.printed_ok.to_string(),
                row.derived_ok.to_string(),
            ]);
        }
    }
    report.deliver(out)?;
    if derived_broken {
        return Err(Failure::Numerical(
            "derived constants disagree with quadrature; the recursion cannot be trusted".into(),
        ));
    }
    Ok(())
}

fn cmd_oracle_check(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let sc = load(path)?;
    let mut report = Report::new("check,detail,error,tol,ok");
    let mut hard_failure = false;

    let prior = sc.prior();
    for i in 0..prior.active {
        let beta = prior.beta[i];
        let scale = prior.scale[i];
        for v in [0.5 * scale, 2.0 * scale] {
            let conj = conjugacy_check(beta, scale, v, 12).map_err(numerical)?;
            for (what, err) in [("density", conj.max_density_err), ("cdf", conj.max_cdf_err)] {
                let ok = err < CONJUGACY_TOL;
                hard_failure |= !ok;
                report.row(&[
                    "conjugacy".to_string(),
                    format!("coord={i} beta={beta} scale={scale} v={v} {what}"),
                    csv_f64(err),
                    csv_f64(CONJUGACY_TOL),
                    ok.to_string(),
                ]);
            }
        }
    }

    for beta in scenario_shapes(&sc) {
        for row in constant_comparison(beta).map_err(numerical)? {
            // The derived set is load-bearing; the printed rows document the
            // published formulas and never fail the run.
            hard_failure |= !row.derived_ok;
            report.row(&[
                "constant-derived".to_string(),
                format!("beta={beta} {}", row.name),
                csv_f64((row.derived - row.quadrature).abs()),
                csv_f64(CONSTANT_TOL),
                row.derived_ok.to_string(),
            ]);
            report.row(&[
                "constant-printed".to_string(),
                format!("beta={beta} {}", row.name),
                csv_f64((row.printed - row.quadrature).abs()),
                csv_f64(CONSTANT_TOL),
                row.printed_ok.to_string(),
            ]);
        }
    }

    let scalar = sc.state_dim() == 1 && sc.row_count() == 1 && prior.active == 1;
    if scalar && sc.max_stage() == 0 {
        report.note("bellman", "skipped: a one-stage horizon has no continuation to check");
    } else if scalar {
        let reduced = sc.reduced();
        match backward_coefficients(&reduced, ConstantMode::Derived) {
            Ok(rc) => {
                let x0 = sc.x0()[0];
                let r0 = prior.scale[0];
                // bellman_check needs a continuation, so probes stay below M.
                let mut points = vec![(0usize, x0, r0), (0, x0 + 1.5, 2.0 * r0)];
                if sc.max_stage() > 1 {
                    points.push((1, -0.5, r0));
                }
                for (n, x, rbar) in points {
                    let check = bellman_check(&reduced, &rc, n, x, rbar).map_err(numerical)?;
                    let tol = 1e-8 * (1.0 + check.value.abs());
                    let ok = check.residual <= tol;
                    hard_failure |= !ok;
                    report.row(&[
                        "bellman".to_string(),
                        format!("n={n} x={x} rbar={rbar}"),
                        csv_f64(check.residual),
                        csv_f64(tol),
                        ok.to_string(),
                    ]);
                }
            }
            Err(RiskError::SingularStageGain { .. }) => {
                report.note("bellman", "skipped: the exact recursion is singular here");
            }
            Err(e) => return Err(numerical(e)),
        }
    } else {
        report.note("bellman", "skipped: needs a scalar square system");
    }

    report.deliver(out)?;
    if hard_failure {
        return Err(Failure::Numerical("an oracle check failed; see the report".into()));
    }
    Ok(())
}
