//! Counts executed debugger steps of `sort` in both sorting references and
//! prints the per-input counts and spreads.
//!
//!     cargo run --example measure_tsc -- [seed] [size]

use std::time::Instant;

use code_dojo::registry::{load_corpus, ReferenceKind};
use code_dojo::sandbox::{BuildProfile, Sandbox};
use code_dojo::submission::stage;
use code_dojo::tsc::{assess_with, default_inputs, StepCounter, StepGranularity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let size: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);

    let corpus = load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus"))?;
    let challenge = corpus.get("sorting-tsc")?;
    let sandbox = Sandbox::default();
    let inputs = default_inputs(size, seed);

    for kind in [ReferenceKind::Secure, ReferenceKind::Vulnerable] {
        let staged = stage(challenge, &challenge.reference(kind)?)?;
        let mut sources = staged.files().to_vec();
        sources.push(challenge.path("harness/wrapper.cpp"));
        let artifact = sandbox.compile(&sources, &BuildProfile::debug())?;
        for granularity in [StepGranularity::SourceLine, StepGranularity::MachineInstruction] {
            let started = Instant::now();
            let mut counter = StepCounter::new(&artifact, "sort", granularity);
            let verdict = assess_with(&mut counter, &inputs, 0.0)?;
            println!(
                "{:<10} {:<4} spread={:>6.1}% detected={} ({:.2?})",
                kind.dir_name(),
                granularity,
                verdict.relative_spread * 100.0,
                verdict.detected,
                started.elapsed()
            );
            for s in &verdict.samples {
                println!("    {:<15} {:?} -> {}", s.input_label, s.input, s.count);
            }
        }
    }
    Ok(())
}
