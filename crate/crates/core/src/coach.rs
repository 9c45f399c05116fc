//! Assessment reports and the deterministic hint coach.
//!
//! Each guideline has a ladder of hints that escalates from the concept,
//! to where to look, to a fix strategy. The coach always works on the most
//! urgent unresolved guideline and reveals one rung per request.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finding::{Finding, FUNCTIONAL_GUIDELINE};
use crate::registry::{Challenge, GuidelineRef, Likelihood, Severity};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoachError {
    #[error("the submission already solves the challenge")]
    AlreadySolved,
}

/// Hint ladders of one challenge, as authored in `hints.toml`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintBook {
    pub id: String,
    #[serde(default)]
    pub ladders: Vec<HintLadder>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintLadder {
    pub guideline: String,
    pub rungs: Vec<String>,
    #[serde(default)]
    pub reference_link: String,
}

impl HintLadder {
    /// Authoring rules: at least three rungs, and the last one names the
    /// guideline it is about.
    pub fn check(&self) -> Result<(), String> {
        if self.rungs.len() < 3 {
            return Err(format!("ladder for {} has {} rung(s), needs 3", self.guideline, self.rungs.len()));
        }
        if !self.rungs.last().is_some_and(|r| r.contains(&self.guideline)) {
            return Err(format!("final rung of the {} ladder does not name the guideline", self.guideline));
        }
        Ok(())
    }

    fn functional() -> HintLadder {
        HintLadder {
            guideline: FUNCTIONAL_GUIDELINE.to_string(),
            rungs: vec![
                "Before code can be secure it has to work: at least one functional test fails.".into(),
                "Read the failing test's message in the report and compare the expected behaviour with what your code does.".into(),
                "Keep the public interface of the skeleton unchanged and make every functional test pass before addressing security findings (FUNCTIONAL).".into(),
            ],
            reference_link: String::new(),
        }
    }

    fn generic(guideline: &str, description: &str) -> HintLadder {
        HintLadder {
            guideline: guideline.to_string(),
            rungs: vec![
                format!("An automated check found a problem of this kind: {description}."),
                "The evidence attached to the finding in the report shows where the problem surfaced.".into(),
                format!("Review your code against the rule {guideline}."),
            ],
            reference_link: String::new(),
        }
    }
}

/// Short per-assessor outcome carried in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessorSummary {
    pub passed: bool,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub submission_id: String,
    pub solved: bool,
    pub findings: Vec<Finding>,
    pub functional_pass: bool,
    #[serde(default)]
    pub per_assessor_verdicts: BTreeMap<String, AssessorSummary>,
}

/// `solved` holds exactly when the functional tests pass and nothing was
/// found.
pub fn build_report(submission_id: impl Into<String>, findings: Vec<Finding>, functional_pass: bool) -> AssessmentReport {
    AssessmentReport {
        submission_id: submission_id.into(),
        solved: functional_pass && findings.is_empty(),
        findings,
        functional_pass,
        per_assessor_verdicts: BTreeMap::new(),
    }
}

/// Which rungs a submission thread has seen.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoachState {
    pub thread_id: String,
    /// Guideline id → highest rung index revealed.
    pub revealed: BTreeMap<String, usize>,
}

impl CoachState {
    pub fn new(thread_id: impl Into<String>) -> Self {
        CoachState {
            thread_id: thread_id.into(),
            revealed: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hint {
    pub guideline: String,
    pub rung: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub reference_link: String,
    /// Whether this is the last rung of the ladder.
    pub exhausted: bool,
}

/// Hint policy for one challenge.
#[derive(Debug, Clone, Default)]
pub struct Coach {
    ladders: BTreeMap<String, HintLadder>,
    guidelines: BTreeMap<String, GuidelineRef>,
}

impl Coach {
    pub fn new(guidelines: &[GuidelineRef], book: Option<&HintBook>) -> Coach {
        Coach {
            ladders: book
                .into_iter()
                .flat_map(|b| b.ladders.iter())
                .map(|l| (l.guideline.clone(), l.clone()))
                .collect(),
            guidelines: guidelines.iter().map(|g| (g.rule_id.clone(), g.clone())).collect(),
        }
    }

    pub fn for_challenge(challenge: &Challenge) -> Coach {
        Coach::new(&challenge.manifest.guidelines, challenge.hints.as_ref())
    }

    fn rank(&self, finding: &Finding) -> (u8, Severity, Likelihood) {
        if finding.guideline == FUNCTIONAL_GUIDELINE {
            return (1, Severity::High, Likelihood::Likely);
        }
        match self.guidelines.get(&finding.guideline) {
            Some(g) => (0, g.severity, g.likelihood),
            None => (0, finding.severity, Likelihood::Unlikely),
        }
    }

    /// The unresolved guideline the coach works on: functional failures
    /// first, then highest (severity, likelihood), ties by id.
    pub fn focus<'a>(&self, report: &'a AssessmentReport) -> Option<&'a str> {
        report
            .findings
            .iter()
            .max_by(|a, b| {
                self.rank(a)
                    .cmp(&self.rank(b))
                    .then_with(|| b.guideline.cmp(&a.guideline))
            })
            .map(|f| f.guideline.as_str())
    }

    pub fn ladder(&self, guideline: &str) -> HintLadder {
        if let Some(l) = self.ladders.get(guideline) {
            return l.clone();
        }
        if guideline == FUNCTIONAL_GUIDELINE {
            return HintLadder::functional();
        }
        let description = self
            .guidelines
            .get(guideline)
            .map(|g| g.description.as_str())
            .unwrap_or(guideline);
        HintLadder::generic(guideline, description)
    }

    /// Reveals the next rung for the focused guideline. Once its ladder is
    /// exhausted the final rung is returned again and the state is left
    /// unchanged.
    pub fn next_hint(&self, state: &CoachState, report: &AssessmentReport) -> Result<(Hint, CoachState), CoachError> {
        if report.solved {
            return Err(CoachError::AlreadySolved);
        }
        let guideline = self.focus(report).unwrap_or(FUNCTIONAL_GUIDELINE).to_string();
        let ladder = self.ladder(&guideline);
        let last = ladder.rungs.len().saturating_sub(1);
        let next = state.revealed.get(&guideline).map_or(0, |r| r + 1);
        let mut new_state = state.clone();
        let rung = if next <= last {
            new_state.revealed.insert(guideline.clone(), next);
            next
        } else {
            last
        };
        let hint = Hint {
            guideline,
            rung,
            text: ladder.rungs.get(rung).cloned().unwrap_or_default(),
            reference_link: ladder.reference_link.clone(),
            exhausted: rung == last,
        };
        Ok((hint, new_state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finding::Channel;
    use crate::registry::Standard;

    fn row(id: &str, severity: Severity, likelihood: Likelihood) -> GuidelineRef {
        GuidelineRef {
            standard: Standard::Cwe,
            rule_id: id.into(),
            severity,
            likelihood,
            description: "d".into(),
            line_hints: vec![],
        }
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

    fn ladder(g: &str) -> HintLadder {
        HintLadder {
            guideline: g.into(),
            rungs: vec!["concept".into(), "locate".into(), format!("fix ({g})")],
            reference_link: String::new(),
        }
    }

    #[test]
    fn report_solved_invariant() {
        assert!(build_report("s", vec![], true).solved);
        assert!(!build_report("s", vec![finding("CWE-208")], true).solved);
        assert!(!build_report("s", vec![], false).solved);
    }

    #[test]
    fn ladder_walk_and_tail() {
        let rows = [
            row("CWE-315", Severity::Medium, Likelihood::Likely),
            row("MEM51-CPP", Severity::High, Likelihood::Likely),
            row("EXP35-CPP", Severity::High, Likelihood::Probable),
        ];
        let book = HintBook {
            id: "x".into(),
            ladders: rows.iter().map(|r| ladder(&r.rule_id)).collect(),
        };
        let coach = Coach::new(&rows, Some(&book));
        let report = build_report("s", rows.iter().map(|r| finding(&r.rule_id)).collect(), true);

        let mut state = CoachState::new("s");
        let mut rungs = vec![];
        for _ in 0..3 {
            let (hint, next) = coach.next_hint(&state, &report).unwrap();
            assert_eq!(hint.guideline, "MEM51-CPP");
            rungs.push(hint.rung);
            state = next;
        }
        assert_eq!(rungs, [0, 1, 2]);
        let (hint, after) = coach.next_hint(&state, &report).unwrap();
        assert_eq!(hint.rung, 2);
        assert!(hint.exhausted);
        assert_eq!(after, state);
    }

    #[test]
    fn functional_failures_come_first() {
        let rows = [row("CWE-208", Severity::High, Likelihood::Likely)];
        let coach = Coach::new(&rows, None);
        let mut f = finding(FUNCTIONAL_GUIDELINE);
        f.channel = Channel::FunctionalTest;
        let report = build_report("s", vec![finding("CWE-208"), f], false);
        let (hint, _) = coach.next_hint(&CoachState::default(), &report).unwrap();
        assert_eq!(hint.guideline, FUNCTIONAL_GUIDELINE);
        assert!(HintLadder::functional().check().is_ok());
    }

    #[test]
    fn solved_reports_get_no_hints() {
        let coach = Coach::default();
        let report = build_report("s", vec![], true);
        assert_eq!(coach.next_hint(&CoachState::default(), &report), Err(CoachError::AlreadySolved));
    }

    #[test]
    fn generic_ladder_names_the_guideline() {
        let coach = Coach::new(&[row("CWE-999", Severity::Low, Likelihood::Unlikely)], None);
        assert!(coach.ladder("CWE-999").check().is_ok());
    }
}
