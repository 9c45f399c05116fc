use std::path::Path;

use code_dojo::assess::Assessor;
use code_dojo::race::{
    calibrate, detect_toctou, required_iterations, RaceCalibrationCurve, RaceError, RaceJobConfig, RequiredIterations,
    LIVENESS_RATIO,
};
use code_dojo::registry::{load_corpus, ReferenceKind};
use code_dojo::sandbox::{BuildArtifact, BuildProfile, Sandbox};
use proptest::prelude::*;

fn build(kind: ReferenceKind) -> BuildArtifact {
    let corpus = load_corpus(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")).unwrap();
    let c = corpus.get("toctou-race").unwrap();
    Assessor::default()
        .build_submission(c, &c.reference(kind).unwrap(), &BuildProfile::plain())
        .unwrap()
}

#[test]
fn vulnerable_reference_is_caught() {
    let artifact = build(ReferenceKind::Vulnerable);
    let config = RaceJobConfig::default();
    let v = detect_toctou(&Sandbox::default(), &artifact, &config).unwrap();
    assert!(v.detected, "{}", v.evidence);
    assert!(v.iterations_used >= 1 && v.iterations_used <= config.max_iterations);
    assert!(v.evidence.contains("b.txt"), "{}", v.evidence);
}

#[test]
fn secure_reference_survives_a_live_attacker() {
    let artifact = build(ReferenceKind::Secure);
    let config = RaceJobConfig::default();
    for _ in 0..3 {
        let v = detect_toctou(&Sandbox::default(), &artifact, &config).unwrap();
        assert!(!v.detected, "{}", v.evidence);
        assert_eq!(v.iterations_used, config.max_iterations);
        assert!(v.attacker_cycles >= config.max_iterations / LIVENESS_RATIO);
    }
}

#[test]
fn zero_budget_makes_no_attempt() {
    let artifact = build(ReferenceKind::Vulnerable);
    let config = RaceJobConfig {
        max_iterations: 0,
        ..RaceJobConfig::default()
    };
    let v = detect_toctou(&Sandbox::default(), &artifact, &config).unwrap();
    assert!(!v.detected);
    assert_eq!(v.iterations_used, 0);
}

#[test]
fn invalid_jobs_are_rejected() {
    let artifact = build(ReferenceKind::Vulnerable);
    let sandbox = Sandbox::default();
    let same = RaceJobConfig {
        decoy_file: "a.txt".into(),
        ..RaceJobConfig::default()
    };
    assert!(matches!(detect_toctou(&sandbox, &artifact, &same), Err(RaceError::InvalidConfig(_))));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("stale"), "").unwrap();
    let busy = RaceJobConfig {
        workspace: Some(dir.path().to_path_buf()),
        ..RaceJobConfig::default()
    };
    assert!(matches!(detect_toctou(&sandbox, &artifact, &busy), Err(RaceError::InvalidConfig(_))));

    assert!(matches!(
        calibrate(&sandbox, &artifact, &RaceJobConfig::default(), 0),
        Err(RaceError::InvalidConfig(_))
    ));
}

#[test]
fn given_workspace_is_left_clean() {
    let artifact = build(ReferenceKind::Vulnerable);
    let dir = tempfile::tempdir().unwrap();
    let config = RaceJobConfig {
        workspace: Some(dir.path().to_path_buf()),
        ..RaceJobConfig::default()
    };
    detect_toctou(&Sandbox::default(), &artifact, &config).unwrap();
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn single_trial_calibration() {
    let artifact = build(ReferenceKind::Vulnerable);
    let curve = calibrate(&Sandbox::default(), &artifact, &RaceJobConfig::default(), 1).unwrap();
    curve.check().unwrap();
    assert_eq!(curve.trials, 1);
    assert_eq!(curve.points.len(), 1);
    assert_eq!(curve.points[0].c, 1.0);
    assert!(curve.to_csv().starts_with("n,c\n"));
}

#[test]
fn secure_calibration_never_reaches_the_target() {
    let artifact = build(ReferenceKind::Secure);
    let config = RaceJobConfig {
        max_iterations: 2000,
        ..RaceJobConfig::default()
    };
    let curve = calibrate(&Sandbox::default(), &artifact, &config, 2).unwrap();
    assert_eq!(curve.detected_trials, 0);
    assert_eq!(required_iterations(&curve, 0.99), RequiredIterations::Unreachable);
}

/// Direct definition of the empirical CDF.
fn oracle_c(outcomes: &[Option<u64>], n: u64) -> f64 {
    outcomes.iter().filter(|o| matches!(o, Some(k) if *k <= n)).count() as f64 / outcomes.len() as f64
}

proptest! {
    #[test]
    fn curve_is_the_empirical_cdf(
        outcomes in prop::collection::vec(prop::option::of(1u64..1000), 1..60),
        probes in prop::collection::vec(0u64..1200, 1..20),
    ) {
        let curve = RaceCalibrationCurve::from_outcomes(&outcomes, 1000);
        prop_assert!(curve.check().is_ok());
        for n in probes {
            prop_assert!((curve.c_at(n) - oracle_c(&outcomes, n)).abs() < 1e-12);
        }
        let target = 0.99;
        let expected = (1..=1000u64).find(|&n| oracle_c(&outcomes, n) >= target);
        let got = match required_iterations(&curve, target) {
            RequiredIterations::Reached(n) => Some(n),
            RequiredIterations::Unreachable => None,
        };
        prop_assert_eq!(got, expected);
    }
}
