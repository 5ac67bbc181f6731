use locoman_core::verify::{self, Mutation, VerifyOptions};

#[test]
fn every_group_passes_within_its_tolerance() {
    let results = verify::run(&[], &VerifyOptions::default()).unwrap();
    let groups: std::collections::BTreeSet<_> = results.iter().map(|r| r.group.as_str()).collect();
    assert_eq!(groups.len(), verify::GROUPS.len());
    for r in &results {
        assert!(r.passed, "{r:?}");
        assert!(r.max_residual <= r.tolerance);
        assert!(r.cases > 0);
    }
}

#[test]
fn flipped_posture_torque_fails_the_nullspace_group() {
    let opts = VerifyOptions {
        mutation: Some(Mutation::FlipNullspaceTorque),
        ..VerifyOptions::default()
    };
    let results = verify::run(&["nullspace".into()], &opts).unwrap();
    assert!(results.iter().any(|r| !r.passed));
    // the mutation stays local to that group
    let clean = verify::run(&["clik".into()], &opts).unwrap();
    assert!(clean.iter().all(|r| r.passed));
}

#[test]
fn single_group_selection() {
    let results = verify::run(&["admittance".into()], &VerifyOptions::default()).unwrap();
    assert!(results.iter().all(|r| r.group == "admittance"));
    let err = verify::run(&["bogus".into()], &VerifyOptions::default()).unwrap_err();
    assert!(err.to_string().contains("kinematics"));
}
