use islnet_demo::{default_scenario, run_scenario, transfer_curve, win_count};

#[test]
fn default_scenario_runs_to_a_two_step_trace() {
    let out = run_scenario(&default_scenario());
    assert!(!out.contains("error:"), "{out}");
    assert!(out.contains("trace "), "{out}");
    assert!(out.contains("steps=2"), "{out}");
}

#[test]
fn failing_command_ends_transcript() {
    let out = run_scenario("create-network 10\nadd-node a 5\nshare a nothing\n");
    assert!(out.trim_end().lines().last().unwrap().starts_with("error:"), "{out}");
}

#[test]
fn curve_starts_at_base_and_ends_with_scratch() {
    let curve = transfer_curve(3, 50, 0.05).unwrap();
    assert_eq!(curve.len(), 52);
    assert!(curve[50] < curve[0]);
    assert_eq!(curve, transfer_curve(3, 50, 0.05).unwrap());
}

#[test]
fn win_count_is_bounded_and_stable() {
    let wins = win_count(20, 50, 0.05).unwrap();
    assert!(wins <= 20);
    assert_eq!(wins, win_count(20, 50, 0.05).unwrap());
}
