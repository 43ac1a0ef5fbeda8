//! The smallest instance that exercises the whole pipeline, chosen so every
//! number is checkable by hand: one state, one control stage, horizon fixed
//! at N = 1, unit coefficients, state-only cost, and a Pareto(3, 1) prior.
//!
//! The backward recursion gives K0 = 2, a control target of -3/4 per unit of
//! running bound, the control u0 = -3/8 at x0 = 0, and the risk 23/32.

use nalgebra::DVector;
use pareto_control::{load_scenario, make_policy, ConstantMode};
use std::path::Path;

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/one_step.json");
    let sc = load_scenario(&path).unwrap();

    let policy = make_policy(&sc, ConstantMode::Derived, None).unwrap();
    let rc = policy.coefficients();

    for n in 0..=sc.max_stage() {
        let (a, b, c) = rc.coefficients(n).unwrap();
        println!(
            "stage {n}: A={:.6} B={:.6} C={:.6} (tail mass {})",
            a[(0, 0)],
            b[(0, 0)],
            c[(0, 0)],
            rc.tail_mass(n)
        );
    }

    let x0 = DVector::from_element(1, 0.0);
    let decision = policy.decision(0, &x0).unwrap();
    let risk = policy.risk_at(0, &x0).unwrap();
    println!("u0 = {} ({})", decision.u[0], decision.tag);
    println!("announced risk = {risk}");

    assert!((decision.u[0] - (-0.375)).abs() < 1e-12);
    assert!((risk - 23.0 / 32.0).abs() < 1e-12);
    println!("matches the hand computation: u0 = -3/8, W0 = 23/32");
}
