//! Runs each security test of the Complex Factory challenge against one
//! reference solution and prints the findings. With `--dump DIR`, the raw
//! report blocks are written to `DIR/<test>.txt` (this is how the parser
//! fixtures are produced).
//!
//!     cargo run --example security_tests -- [vulnerable|secure] [--dump DIR]

use std::fs;
use std::path::PathBuf;

use code_dojo::memory::{parse_runtime_report, run_security_test};
use code_dojo::registry::{load_corpus, ReferenceKind};
use code_dojo::sandbox::{BuildProfile, ExecLimits, ExecRequest, Sandbox};
use code_dojo::submission::stage;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = match args.first().map(String::as_str) {
        Some("secure") => ReferenceKind::Secure,
        _ => ReferenceKind::Vulnerable,
    };
    let dump = args
        .iter()
        .position(|a| a == "--dump")
        .and_then(|i| args.get(i + 1))
        .map(PathBuf::from);

    let corpus = load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus"))?;
    let challenge = corpus.get("complex-factory")?;
    let staged = stage(challenge, &challenge.reference(kind)?)?;
    let sandbox = Sandbox::default();

    for test in &challenge.manifest.security_tests {
        let findings = run_security_test(&sandbox, challenge, &staged, test)?;
        println!("{} ({} finding(s))", test.id, findings.len());
        for f in &findings {
            println!("    {f}");
        }
        if let Some(dir) = &dump {
            // Re-run to capture the raw report blocks for the fixture.
            let mut sources = staged.files().to_vec();
            sources.push(challenge.path(&test.driver_source));
            sources.push(challenge.path("harness/security_check.h"));
            let artifact = sandbox.compile(&sources, &BuildProfile::sanitized())?;
            let mut asan = "detect_leaks=1:color=never".to_string();
            if let Some(extra) = &test.sanitizer_options {
                asan = format!("{asan}:{extra}");
            }
            let result = sandbox.run(
                &artifact,
                &ExecRequest {
                    env: vec![("ASAN_OPTIONS".into(), asan)],
                    limits: ExecLimits::default(),
                    ..ExecRequest::default()
                },
            )?;
            fs::create_dir_all(dir)?;
            for (i, block) in result.runtime_reports.iter().enumerate() {
                fs::write(dir.join(format!("{}-{i}.txt", test.id)), block)?;
                println!("    dumped {:?}", parse_runtime_report(block));
            }
        }
    }
    Ok(())
}
