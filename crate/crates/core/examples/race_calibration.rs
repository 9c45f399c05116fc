//! Calibrates the TOCTOU detector on this machine: runs the attack against
//! the vulnerable reference `trials` times and prints the detection CDF as
//! CSV, followed by the iteration budget needed for 99 % detection. A few
//! runs against the secure reference check for false positives.
//!
//!     cargo run --release --example race_calibration -- [trials] [max_iterations]

use std::time::Instant;

use code_dojo::race::{calibrate, detect_toctou, required_iterations, RaceJobConfig};
use code_dojo::registry::{load_corpus, ReferenceKind};
use code_dojo::sandbox::{BuildProfile, Sandbox};
use code_dojo::submission::stage;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let trials: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let max_iterations: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10_000);

    let corpus = load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus"))?;
    let challenge = corpus.get("toctou-race")?;
    let sandbox = Sandbox::default();
    let config = RaceJobConfig {
        max_iterations,
        ..RaceJobConfig::from_manifest(&challenge.manifest)
    };

    let build = |kind| -> Result<_, Box<dyn std::error::Error>> {
        let staged = stage(challenge, &challenge.reference(kind)?)?;
        let mut sources = staged.files().to_vec();
        sources.push(challenge.path("harness/race_wrapper.cpp"));
        Ok(sandbox.compile(&sources, &BuildProfile::plain())?)
    };

    let vulnerable = build(ReferenceKind::Vulnerable)?;
    let started = Instant::now();
    let curve = calibrate(&sandbox, &vulnerable, &config, trials)?;
    curve.check()?;
    print!("{}", curve.to_csv());
    eprintln!(
        "{} of {trials} trials detected in {:.1?}; c({max_iterations}) = {:.3}; 99% needs {:?}",
        curve.detected_trials,
        started.elapsed(),
        curve.c_at(max_iterations),
        required_iterations(&curve, 0.99)
    );

    let secure = build(ReferenceKind::Secure)?;
    for _ in 0..3 {
        let verdict = detect_toctou(&sandbox, &secure, &config)?;
        eprintln!("secure: detected={} ({})", verdict.detected, verdict.evidence);
    }
    Ok(())
}
