//! Assesses a submission end to end and prints the report.
//!
//!     cargo run --example assess_submission -- <challenge> [vulnerable|secure|FILE...]
//!
//! With no solution argument, both references of the challenge are assessed.

use std::path::Path;
use std::time::Instant;

use code_dojo::assess::Assessor;
use code_dojo::registry::{load_corpus, ReferenceKind};
use code_dojo::submission::SubmissionFiles;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let id = args.first().map(String::as_str).unwrap_or("sorting-tsc");
    let corpus = load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus"))?;
    let challenge = corpus.get(id)?;

    let mut runs: Vec<(String, SubmissionFiles)> = Vec::new();
    match args.get(1).map(String::as_str) {
        None => {
            for kind in [ReferenceKind::Vulnerable, ReferenceKind::Secure] {
                runs.push((kind.dir_name().into(), challenge.reference(kind)?));
            }
        }
        Some("vulnerable") => runs.push(("vulnerable".into(), challenge.reference(ReferenceKind::Vulnerable)?)),
        Some("secure") => runs.push(("secure".into(), challenge.reference(ReferenceKind::Secure)?)),
        Some(_) => {
            let mut files = SubmissionFiles::default();
            for path in &args[1..] {
                let name = Path::new(path).file_name().ok_or("bad path")?.to_string_lossy();
                files.insert(name.into_owned(), std::fs::read(path)?);
            }
            runs.push(("submission".into(), files));
        }
    }

    let assessor = Assessor::default();
    for (label, files) in runs {
        let started = Instant::now();
        let report = assessor.assess(challenge, &label, &files)?;
        println!(
            "{id} / {label}: solved={} functional_pass={} ({:.1}s)",
            report.solved,
            report.functional_pass,
            started.elapsed().as_secs_f64()
        );
        for (assessor, verdict) in &report.per_assessor_verdicts {
            println!("  [{assessor}] passed={} {}", verdict.passed, verdict.summary);
        }
        for f in &report.findings {
            println!("  {f}");
        }
    }
    Ok(())
}
