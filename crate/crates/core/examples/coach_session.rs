//! Assesses the vulnerable Complex Factory reference, then asks the coach
//! for hints the way a stuck player would.
//!
//!     cargo run --example coach_session -- [hints]

use code_dojo::assess::Assessor;
use code_dojo::coach::{Coach, CoachState};
use code_dojo::registry::{load_corpus, ReferenceKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hints: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(4);
    let corpus = load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus"))?;
    let challenge = corpus.get("complex-factory")?;
    let report = Assessor::default().assess(challenge, "demo", &challenge.reference(ReferenceKind::Vulnerable)?)?;

    let coach = Coach::for_challenge(challenge);
    println!("{} finding(s); coach focuses on {:?}", report.findings.len(), coach.focus(&report));
    let mut state = CoachState::new("demo");
    for _ in 0..hints {
        let (hint, next) = coach.next_hint(&state, &report)?;
        println!("[{} rung {}{}] {}", hint.guideline, hint.rung, if hint.exhausted { ", last" } else { "" }, hint.text);
        state = next;
    }
    Ok(())
}
