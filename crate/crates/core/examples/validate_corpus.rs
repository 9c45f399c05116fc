//! Validates a challenge corpus: manifests, hint ladders and, unless
//! `--static` is given, that every assessor tells each challenge's
//! references apart.
//!
//!     cargo run --example validate_corpus -- [ROOT] [--static]

use code_dojo::cli::validate_corpus;
use code_dojo::registry::load_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let static_only = args.iter().any(|a| a == "--static");
    let root = args
        .iter()
        .find(|a| !a.starts_with("--"))
        .cloned()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus").into());

    let corpus = load_corpus(&root)?;
    for c in corpus.challenges() {
        let ladders = c.hints.as_ref().map_or(0, |h| h.ladders.len());
        println!(
            "{:<16} {:<32} assessors={:?} guidelines={} ladders={ladders}",
            c.manifest.id,
            c.manifest.title,
            c.manifest.assessors,
            c.manifest.guidelines.len()
        );
    }
    let problems = validate_corpus(&corpus, !static_only)?;
    for p in &problems {
        println!("problem: {}: {}", p.challenge, p.problem);
    }
    if problems.is_empty() {
        println!("ok");
    } else {
        std::process::exit(1);
    }
    Ok(())
}
