use fitolab_core::scenario::{catalog, dispatch, find_in_catalog, Status};

#[test]
fn every_bundled_scenario_meets_its_expectations() {
    for config in catalog() {
        let (trace, report) = dispatch(&config).unwrap();
        assert!(report.all_as_expected(), "{}", report.to_text());
        assert_eq!(trace.scenario_id(), config.scenario_id);
        assert_eq!(report.exit_code(), 0);
    }
}

#[test]
fn dispatch_is_deterministic() {
    for config in catalog() {
        let (t1, r1) = dispatch(&config).unwrap();
        let (t2, r2) = dispatch(&config).unwrap();
        assert_eq!(t1.to_jsonl(), t2.to_jsonl(), "{}", config.scenario_id);
        assert_eq!(r1.to_json(), r2.to_json());
    }
}

#[test]
fn rw_disagreement_is_a_passing_verdict() {
    let (_, r) = dispatch(&find_in_catalog("2pc-vs-swap-fito").unwrap()).unwrap();
    let v = r
        .verdicts
        .iter()
        .find(|v| v.name == "violation-found")
        .unwrap();
    assert_eq!(v.status, Status::Pass);
    assert!(r.witness.is_some());
}

#[test]
fn swap_is_certified() {
    let (_, r) = dispatch(&find_in_catalog("2pc-vs-swap-bilateral").unwrap()).unwrap();
    let v = r.verdicts.iter().find(|v| v.name == "certified").unwrap();
    assert_eq!(v.status, Status::Pass);
    assert!(r.witness.is_none());
}

#[test]
fn flipped_expectation_fails_with_exit_code_one() {
    let mut c = find_in_catalog("cap-partition-fito-ap").unwrap();
    c.lab_params["expect"]["divergence_events"] = 0.into();
    let (_, r) = dispatch(&c).unwrap();
    assert_eq!(r.exit_code(), 1);
}
