use std::path::Path;

use code_dojo::coach::{build_report, AssessmentReport, Coach, CoachError, CoachState};
use code_dojo::finding::{Channel, Finding, FUNCTIONAL_GUIDELINE};
use code_dojo::registry::{load_corpus, Corpus, Likelihood, Severity};

fn corpus() -> Corpus {
    load_corpus(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")).unwrap()
}

fn finding(g: &str) -> Finding {
    Finding {
        guideline: g.into(),
        channel: Channel::Instrumentation,
        evidence: "e".into(),
        location: None,
        severity: Severity::High,
        source: None,
    }
}

fn report_of(guidelines: &[&str]) -> AssessmentReport {
    build_report("s", guidelines.iter().map(|g| finding(g)).collect(), true)
}

/// Complex Factory rows of the published table as (rule, severity,
/// likelihood).
const TABLE: [(&str, Severity, Likelihood); 8] = [
    ("MEM31-C", Severity::Medium, Likelihood::Probable),
    ("EXP35-CPP", Severity::High, Likelihood::Probable),
    ("EXP45-CPP", Severity::High, Likelihood::Probable),
    ("MEM51-CPP", Severity::High, Likelihood::Likely),
    ("CTR50-CPP", Severity::High, Likelihood::Likely),
    ("ARR31-C", Severity::High, Likelihood::Probable),
    ("CWE-315", Severity::Medium, Likelihood::Likely),
    ("CWE-416", Severity::High, Likelihood::Likely),
];

fn table_top(rows: &[(&'static str, Severity, Likelihood)]) -> &'static str {
    let best = rows.iter().map(|r| (r.1, r.2)).max().unwrap();
    rows.iter().filter(|r| (r.1, r.2) == best).map(|r| r.0).min().unwrap()
}

#[test]
fn three_hints_climb_the_top_ranked_ladder() {
    let corpus = corpus();
    let coach = Coach::for_challenge(corpus.get("complex-factory").unwrap());
    let report = report_of(&TABLE.map(|r| r.0));
    let top = table_top(&TABLE);
    assert_eq!(top, "CTR50-CPP");

    let session = |n: usize| {
        let mut state = CoachState::new("t");
        let mut hints = Vec::new();
        for _ in 0..n {
            let (hint, next) = coach.next_hint(&state, &report).unwrap();
            hints.push(hint);
            state = next;
        }
        (hints, state)
    };
    let (hints, state) = session(3);
    assert!(hints.iter().all(|h| h.guideline == top));
    assert_eq!(hints.iter().map(|h| h.rung).collect::<Vec<_>>(), [0, 1, 2]);
    assert!(hints[2].exhausted && !hints[1].exhausted);
    assert_eq!(state.revealed.get(top), Some(&2));
    // Replaying the same sequence reproduces the same hints.
    assert_eq!(session(3).0, hints);
}

#[test]
fn exhausted_ladder_repeats_its_last_rung() {
    let corpus = corpus();
    let coach = Coach::for_challenge(corpus.get("sorting-tsc").unwrap());
    let report = report_of(&["CWE-208"]);
    let mut state = CoachState::new("t");
    let mut last = None;
    for _ in 0..5 {
        let (hint, next) = coach.next_hint(&state, &report).unwrap();
        state = next;
        last = Some(hint);
    }
    let last = last.unwrap();
    assert_eq!(last.rung, coach.ladder("CWE-208").rungs.len() - 1);
    assert!(last.exhausted);
    assert!(last.text.contains("CWE-208"));
}

#[test]
fn focus_moves_on_once_the_top_finding_is_fixed() {
    let corpus = corpus();
    let coach = Coach::for_challenge(corpus.get("complex-factory").unwrap());
    let rest: Vec<_> = TABLE.iter().copied().filter(|r| r.0 != "CTR50-CPP").collect();
    let report = report_of(&rest.iter().map(|r| r.0).collect::<Vec<_>>());
    assert_eq!(coach.focus(&report), Some(table_top(&rest)));
}

#[test]
fn functional_failures_come_first() {
    let corpus = corpus();
    let coach = Coach::for_challenge(corpus.get("complex-factory").unwrap());
    let report = report_of(&["CTR50-CPP", FUNCTIONAL_GUIDELINE]);
    let (hint, _) = coach.next_hint(&CoachState::new("t"), &report).unwrap();
    assert_eq!(hint.guideline, FUNCTIONAL_GUIDELINE);
}

#[test]
fn solved_reports_get_no_hints() {
    let corpus = corpus();
    let coach = Coach::for_challenge(corpus.get("toctou-race").unwrap());
    let report = report_of(&[]);
    assert!(report.solved);
    assert!(matches!(
        coach.next_hint(&CoachState::new("t"), &report),
        Err(CoachError::AlreadySolved)
    ));
}

#[test]
fn shipped_ladders_are_well_formed() {
    let corpus = corpus();
    for c in corpus.challenges() {
        let coach = Coach::for_challenge(c);
        for g in &c.manifest.guidelines {
            let ladder = coach.ladder(&g.rule_id);
            ladder.check().unwrap();
            assert!(ladder.rungs.last().unwrap().contains(&g.rule_id), "{}", g.rule_id);
        }
    }
    assert!(Coach::default().ladder(FUNCTIONAL_GUIDELINE).rungs.len() >= 3);
}
