//! The acceptance gate: eight end-to-end criteria, each with an explicit
//! tolerance and a runtime budget. Every test prints one PASS line with its
//! elapsed time (visible under --nocapture); a failure panics with the
//! offending numbers.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use pareto_control::{
    conjugacy_check, constant_comparison, default_beta_grid, estimate_risk, grid_oracle_policy,
    load_scenario, make_policy, pareto_draw, pareto_moment, pinv, scalar_constants,
    tikhonov_solve, bayes_control, CaseTag, ConstantMode, GridSpec, HorizonDist, LambdaSource,
    PriorSpec, Scenario, StageData, Tolerance,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn finish(label: &str, started: Instant, budget_s: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_s,
        "criterion {label} overran its budget: {elapsed:.1}s of {budget_s}s"
    );
    println!("criterion {label}: PASS ({elapsed:.2}s, budget {budget_s}s)");
}

fn scenario_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

#[test]
fn criterion_1_conjugacy_against_brute_force_normalization() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(901);
    for trial in 0..50 {
        let beta = 2.1 + 7.9 * rng.random::<f64>();
        let r = 0.3 + 2.7 * rng.random::<f64>();
        let v = 4.0 * r * rng.random::<f64>();
        let rep = conjugacy_check(beta, r, v, 12).unwrap();
        assert!(
            rep.max_density_err < 1e-8,
            "trial {trial} (beta={beta}, r={r}, v={v}): density error {}",
            rep.max_density_err
        );
        assert!(
            rep.max_cdf_err < 1e-8,
            "trial {trial} (beta={beta}, r={r}, v={v}): cdf error {}",
            rep.max_cdf_err
        );
    }
    finish("1 (conjugacy oracle)", started, 10.0);
}

#[test]
fn criterion_2_constants_against_adaptive_quadrature() {
    let started = Instant::now();
    let scale = 1.3;
    for beta in default_beta_grid() {
        for row in constant_comparison(beta).unwrap() {
            assert!(
                row.derived_ok,
                "derived {} at beta {beta}: {} vs quadrature {}",
                row.name, row.derived, row.quadrature
            );
            let survives = matches!(row.name, "Q1" | "Q2");
            assert_eq!(
                row.printed_ok, survives,
                "printed {} at beta {beta} should{} agree: {} vs {}",
                row.name,
                if survives { "" } else { " not" },
                row.printed,
                row.quadrature
            );
        }
        // The bound-cost factors: E[lambda] = T r and E[lambda^2] = T1 r^2
        // under the running Pareto(beta, r) posterior.
        let t = beta / (beta - 1.0);
        let t1 = beta / (beta - 2.0);
        let q1 = pareto_moment(beta, scale, 1).unwrap();
        let q2 = pareto_moment(beta, scale, 2).unwrap();
        assert!((t * scale - q1).abs() / q1 < 1e-10, "T at beta {beta}");
        assert!((t1 * scale * scale - q2).abs() / q2 < 1e-10, "T1 at beta {beta}");
    }
    finish("2 (moment constants)", started, 5.0);
}

#[test]
fn criterion_3_monte_carlo_reproduces_the_predictive_moments() {
    let started = Instant::now();
    // beta = 5 keeps the sample variance of every tracked statistic finite.
    let (beta, r) = (5.0, 1.0);
    let n = 1_000_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut sums = [0.0f64; 5];
    let mut squares = [0.0f64; 5];
    for _ in 0..n {
        let lambda = pareto_draw(&mut rng, beta, r);
        let v = lambda * rng.random::<f64>();
        let top = r.max(v);
        let obs = [v, v * v, top, top * top, v * top];
        for (i, o) in obs.iter().enumerate() {
            sums[i] += o;
            squares[i] += o * o;
        }
    }
    let q = scalar_constants(beta, ConstantMode::Derived).unwrap();
    let targets = [q[0] * r, q[1] * r * r, q[2] * r, q[3] * r * r, q[4] * r * r];
    let names = ["E[v]", "E[v^2]", "E[max]", "E[max^2]", "E[v max]"];
    let fn_n = n as f64;
    for i in 0..5 {
        let mean = sums[i] / fn_n;
        let var = (squares[i] - sums[i] * sums[i] / fn_n) / (fn_n - 1.0);
        let se = (var / fn_n).sqrt();
        assert!(
            (mean - targets[i]).abs() <= 4.0 * se,
            "{}: sample {mean} vs {} ({:.2} se)",
            names[i],
            targets[i],
            (mean - targets[i]).abs() / se
        );
    }
    finish("3 (monte carlo moments)", started, 30.0);
}

#[test]
fn criterion_4_one_step_analytic_instance() {
    let started = Instant::now();
    let sc = load_scenario(&scenario_path("one_step.json")).unwrap();
    let policy = make_policy(&sc, ConstantMode::Derived, None).unwrap();
    let x0 = DVector::from_element(1, 0.0);

    let u0 = policy.decision(0, &x0).unwrap().u[0];
    assert!((u0 - (-0.375)).abs() <= 1e-12, "u0 = {u0}, want -3/8");

    let announced = policy.risk_at(0, &x0).unwrap();
    assert!((announced - 23.0 / 32.0).abs() <= 1e-12, "W0 = {announced}, want 23/32");

    let mc = estimate_risk(&sc, || Ok(policy.fresh()), &LambdaSource::Prior, 100_000, 404)
        .unwrap();
    assert!(
        (announced - mc.mean).abs() <= 3.0 * mc.se,
        "announced {announced} vs simulated {} +- {}",
        mc.mean,
        mc.se
    );
    finish("4 (one-step instance)", started, 60.0);
}

fn random_scalar_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let max_stage = 1 + (rng.random::<u64>() % 3) as usize;
    let stages = (0..=max_stage)
        .map(|_| {
            let s_xx = 0.3 + 1.7 * rng.random::<f64>();
            let s_ll = 0.6 * rng.random::<f64>();
            StageData {
                alpha: DMatrix::from_element(1, 1, 0.7 + 0.4 * rng.random::<f64>()),
                b: DMatrix::from_element(1, 1, 0.6 + 0.7 * rng.random::<f64>()),
                c: DMatrix::from_element(1, 1, 0.5 + 0.7 * rng.random::<f64>()),
                s: DMatrix::from_row_slice(2, 2, &[s_xx, 0.0, 0.0, s_ll]),
                k: DMatrix::from_element(1, 1, 0.5 + 1.0 * rng.random::<f64>()),
            }
        })
        .collect();
    let mut probs: Vec<f64> = (0..=max_stage).map(|_| rng.random::<f64>()).collect();
    probs[max_stage] += 0.5;
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    // x0 snaps onto the lattice nodes used below so the initial actions are
    // compared at exactly the same state.
    let x0 = 2.0 * rng.random::<f64>() - 1.0;
    let x0 = (x0 / 0.25).round() * 0.25;
    Scenario::new(
        1,
        1,
        stages,
        HorizonDist::new(probs).unwrap(),
        PriorSpec {
            beta: vec![4.0 + 3.0 * rng.random::<f64>()],
            scale: vec![0.8 + 0.7 * rng.random::<f64>()],
            active: 1,
        },
        DVector::from_element(1, x0),
    )
    .unwrap()
}

#[test]
fn criterion_5_lattice_oracle_agreement() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let spec = GridSpec {
        x_lo: -40.0,
        x_hi: 40.0,
        x_pts: 321,
        r_factor: 40.0,
        r_pts: 21,
        u_lo: -6.0,
        u_hi: 6.0,
        u_pts: 241,
        head_panels: 16,
        tail_panels: 16,
    };
    let u_step = (spec.u_hi - spec.u_lo) / (spec.u_pts as f64 - 1.0);
    for case in 0..5u64 {
        let sc = random_scalar_scenario(&mut rng);
        let oracle = grid_oracle_policy(&sc, &spec).unwrap();
        let policy = make_policy(&sc, ConstantMode::Derived, None).unwrap();

        let x0 = sc.x0()[0];
        let u_exact = policy.decision(0, sc.x0()).unwrap().u[0];
        let u_lattice = oracle.control_at(0, x0).unwrap();
        assert!(
            (u_lattice - u_exact).abs() <= u_step + 1e-12,
            "case {case}: lattice {u_lattice} vs exact {u_exact} (step {u_step})"
        );

        let bayes = estimate_risk(&sc, || Ok(policy.fresh()), &LambdaSource::Prior, 400, 880 + case)
            .unwrap();
        let brute = estimate_risk(&sc, || Ok(oracle.fresh()), &LambdaSource::Prior, 400, 880 + case)
            .unwrap();
        let pooled = (bayes.se * bayes.se + brute.se * brute.se).sqrt();
        assert!(
            bayes.mean <= brute.mean + 3.0 * pooled,
            "case {case}: bayes {} vs lattice {} (pooled se {pooled})",
            bayes.mean,
            brute.mean
        );
    }
    finish("5 (lattice oracle)", started, 600.0);
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| 2.0 * rng.random::<f64>() - 1.0)
}

#[test]
fn criterion_6_penrose_identities_and_ridge_limit() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for trial in 0..200 {
        let rows = 1 + (rng.random::<u64>() % 6) as usize;
        let cols = 1 + (rng.random::<u64>() % 6) as usize;
        let a = if trial % 3 == 0 && rows.min(cols) > 1 {
            // A thin product forces rank deficiency.
            let inner = 1 + (rng.random::<u64>() % (rows.min(cols) as u64 - 1)) as usize;
            random_matrix(&mut rng, rows, inner) * random_matrix(&mut rng, inner, cols)
        } else {
            random_matrix(&mut rng, rows, cols)
        };
        let tol = Tolerance::for_shape(rows, cols);
        let p = pinv(&a, &tol).unwrap();
        let sa = 1.0 + a.norm();
        let sp = 1.0 + p.norm();
        assert!((&a * &p * &a - &a).norm() <= 1e-9 * sa, "trial {trial}: A P A != A");
        assert!((&p * &a * &p - &p).norm() <= 1e-9 * sp, "trial {trial}: P A P != P");
        let ap = &a * &p;
        let pa = &p * &a;
        assert!((ap.transpose() - &ap).norm() <= 1e-9 * (1.0 + ap.norm()), "trial {trial}: A P");
        assert!((pa.transpose() - &pa).norm() <= 1e-9 * (1.0 + pa.norm()), "trial {trial}: P A");
    }

    // The ridge walks monotonically into the minimum-norm least-squares
    // solution as theta shrinks.
    let k = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    let l = DVector::from_row_slice(&[1.0, 1.0, 2.0]);
    let tol = Tolerance::for_shape(3, 2);
    let star = pinv(&k, &tol).unwrap() * &l;
    let mut last = f64::INFINITY;
    for exp in 1..=7 {
        let theta = 10f64.powi(-exp);
        let u = tikhonov_solve(&k, &l, theta).unwrap();
        let dist = (&u - &star).norm();
        assert!(dist <= last + 1e-15, "theta {theta}: distance {dist} rose above {last}");
        last = dist;
    }
    assert!(last <= 1e-9 * (1.0 + star.norm()), "ridge limit stopped {last} short");
    finish("6 (penrose suite)", started, 10.0);
}

#[test]
fn criterion_7_case_dispatch_and_characterizing_properties() {
    let started = Instant::now();
    let tol9 = 1e-9;

    // Square, full rank: the unique exact solve.
    let k = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
    let l = DVector::from_row_slice(&[-3.0, 2.0]);
    let tol = Tolerance::for_shape(2, 2);
    let d = bayes_control(&k, &l, &tol, None).unwrap();
    assert_eq!(d.tag, CaseTag::FullRankSquare);
    assert!((&k * &d.u - &l).norm() <= tol9);

    // Tall, full column rank, reachable target: exact again.
    let k = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
    let l = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
    let tol = Tolerance::for_shape(3, 1);
    let d = bayes_control(&k, &l, &tol, None).unwrap();
    assert_eq!(d.tag, CaseTag::TallFullRankConsistent);
    assert!((&k * &d.u - &l).norm() <= tol9);

    // Tall, unreachable target: least squares, certified by the normal
    // equations rather than by a zero defect.
    let k = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
    let l = DVector::from_row_slice(&[1.0, 0.0]);
    let tol = Tolerance::for_shape(2, 1);
    let d = bayes_control(&k, &l, &tol, None).unwrap();
    assert_eq!(d.tag, CaseTag::TallFullRankInconsistent);
    assert!(d.residual > 0.5);
    assert!((k.transpose() * (&k * &d.u - &l)).norm() <= tol9);

    // Rank deficient: the ridge answer has a closed form here.
    let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let l = DVector::from_row_slice(&[1.0, 0.0]);
    let tol = Tolerance::for_shape(2, 2);
    let theta = 1e-6;
    let d = bayes_control(&k, &l, &tol, Some(theta)).unwrap();
    assert_eq!(d.tag, CaseTag::RankDeficientRegularized);
    assert_eq!(d.theta_used, Some(theta));
    assert!((d.u[0] - 1.0 / (1.0 + theta * theta)).abs() <= tol9);
    assert!(d.u[1].abs() <= tol9);

    // Wide, full row rank: exact and of minimum norm, so it lies in the row
    // span (both coordinates equal here).
    let k = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let l = DVector::from_row_slice(&[2.0]);
    let tol = Tolerance::for_shape(1, 2);
    let d = bayes_control(&k, &l, &tol, None).unwrap();
    assert_eq!(d.tag, CaseTag::WideFullRankMinNorm);
    assert!((&k * &d.u - &l).norm() <= tol9);
    assert!((d.u[0] - d.u[1]).abs() <= tol9);

    finish("7 (case dispatch)", started, 5.0);
}

#[test]
fn criterion_8_reports_are_byte_identical() {
    let started = Instant::now();
    let bin = env!("CARGO_BIN_EXE_pareto-control");
    let scenario = scenario_path("example.json");
    let dir = tempfile::tempdir().unwrap();

    let run = |threads: &str, name: &str| -> Vec<u8> {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args([
                "simulate",
                "--scenario",
                scenario.to_str().unwrap(),
                "--reps",
                "5000",
                "--seed",
                "11",
                "--out",
                out.to_str().unwrap(),
            ])
            .env("RAYON_NUM_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success(), "simulate failed under {threads} threads");
        std::fs::read(&out).unwrap()
    };

    let first = run("1", "a.csv");
    let again = run("1", "b.csv");
    let wide = run("4", "c.csv");
    assert_eq!(first, again, "same worker count, different bytes");
    assert_eq!(first, wide, "worker count changed the bytes");
    finish("8 (determinism)", started, 60.0);
}
