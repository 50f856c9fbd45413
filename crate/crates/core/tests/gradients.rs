mod common;

use common::gradcheck::{rel_err, suite, TOLERANCE};

#[test]
fn every_component_matches_central_differences() {
    let reports = suite(7);
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{} ({} probes, max rel err {:.2e}, {})", r.name, r.probes, r.max_rel_err, r.worst))
        .collect();
    assert!(failed.is_empty(), "gradient mismatches: {failed:#?}");
    for name in ["dense", "conv2d", "layer_norm", "encoder", "lstm cell", "ltc cell", "cfc cell", "wired cfc", "synapse"] {
        assert!(reports.iter().any(|r| r.name == name), "{name} not covered");
    }
}

#[test]
fn a_second_seed_also_passes() {
    assert!(suite(1234).iter().all(|r| r.passed()));
}

#[test]
fn relative_error_uses_a_floor() {
    assert_eq!(rel_err(1.0, 1.0), 0.0);
    assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-15);
    assert!(rel_err(1e-12, -1e-12) < TOLERANCE);
}
