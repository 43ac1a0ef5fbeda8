//! Load the shipped scenarios, print what validation accepted, and show a
//! rejection with its diagnostic.

use pareto_control::{load_scenario, scenario_from_json, scenario_to_json};
use std::path::Path;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");

    for name in ["one_step.json", "example.json", "generalized.json", "singular.json"] {
        let sc = load_scenario(&dir.join(name)).expect("shipped scenarios must validate");
        let shape = if sc.is_square() { "square" } else { "generalized" };
        println!(
            "{name}: m={} r={} stages=0..={} active={} ({shape})",
            sc.state_dim(),
            sc.row_count(),
            sc.max_stage(),
            sc.prior().active,
        );
    }

    // Serialization round-trips through the documented schema.
    let sc = load_scenario(&dir.join("example.json")).unwrap();
    let again = scenario_from_json(&scenario_to_json(&sc)).unwrap();
    assert_eq!(sc, again);
    println!("json round trip: identical");

    // A horizon that can end before it starts is refused with a reason.
    let bad = r#"{
        "m": 1, "r": 1, "M": 0,
        "stages": [{"alpha": [1.0], "b": [1.0], "c": [1.0], "s": [1.0,0.0,0.0,0.0], "k": [1.0]}],
        "horizon": {"probs": [0.0]},
        "prior": {"beta": [3.0], "r": [1.0], "k": 1},
        "x0": [0.0]
    }"#;
    match scenario_from_json(bad) {
        Err(e) => println!("rejected as expected: {e}"),
        Ok(_) => unreachable!("a vanishing final probability must not validate"),
    }
}
