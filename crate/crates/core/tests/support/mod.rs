//! Service model shared by the service tests and the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use code_dojo::coach::{build_report, AssessmentReport};
use code_dojo::finding::{Channel, Finding};
use code_dojo::registry::{load_corpus, Challenge, Corpus, Severity};
use code_dojo::service::{Event, Service, ServiceError, SubmissionAssessor, SubmissionStatus};
use code_dojo::submission::SubmissionFiles;
use proptest::prelude::*;
use serde_json::Value;

/// Decides from the source text: `VULN` → unsolved, `BOOM` → error,
/// anything else → solved.
pub struct FakeAssessor;

impl SubmissionAssessor for FakeAssessor {
    fn assess(&self, challenge: &Challenge, id: &str, files: &SubmissionFiles) -> Result<AssessmentReport, String> {
        let text: String = files.iter().map(|(_, t)| t).collect();
        if text.contains("BOOM") {
            return Err("toolchain exploded".into());
        }
        let findings = if text.contains("VULN") {
            vec![Finding {
                guideline: challenge.manifest.guidelines[0].rule_id.clone(),
                channel: Channel::Instrumentation,
                evidence: "fake".into(),
                location: None,
                severity: Severity::High,
                source: None,
            }]
        } else {
            vec![]
        };
        Ok(build_report(id, findings, true))
    }
}

pub fn corpus() -> Arc<Corpus> {
    Arc::new(load_corpus(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")).unwrap())
}

pub fn open(dir: &Path) -> Arc<Service> {
    Arc::new(Service::open(corpus(), dir, Arc::new(FakeAssessor)).unwrap())
}

#[derive(Debug, Clone)]
pub enum Op {
    Submit(u8),
    Poll(usize),
    Hint(usize),
    Work,
    CrashMidAssessment,
    Restart,
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0u8..3).prop_map(Op::Submit),
        2 => any::<usize>().prop_map(Op::Poll),
        3 => any::<usize>().prop_map(Op::Hint),
        3 => Just(Op::Work),
        1 => Just(Op::CrashMidAssessment),
        1 => Just(Op::Restart),
    ]
}

/// The allowed status changes, written out independently of the service.
/// `Some(None)` means the next status depends on the report.
fn legal(from: Option<&str>, event: &str) -> Option<Option<&'static str>> {
    match (from, event) {
        (None, "submitted") => Some(Some("queued")),
        (Some("queued"), "assessment-started") => Some(Some("assessing")),
        (Some("assessing"), "requeued") => Some(Some("queued")),
        (Some("assessing"), "assessment-finished") => Some(None),
        (Some("assessing"), "assessment-failed") => Some(Some("error")),
        (Some("unsolved"), "hint-revealed") => Some(Some("unsolved")),
        _ => None,
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Runs `ops` against a fresh service, crashing and restarting it where
/// asked, and checks after every step that no submission is stuck
/// assessing, that reports never change once written, that hints climb,
/// and finally that the persisted history only takes legal transitions.
pub fn run_ops(ops: &[Op]) -> Result<(), String> {
    let dir = tempfile::tempdir().unwrap();
    let mut service = open(dir.path());
    let mut ids: Vec<String> = Vec::new();
    let mut reports: BTreeMap<String, Value> = BTreeMap::new();
    let mut rungs: BTreeMap<String, usize> = BTreeMap::new();

    for op in ops {
        match *op {
            Op::Submit(kind) => {
                let source = ["VULN", "fine", "BOOM"][kind as usize % 3];
                let r = service
                    .submit_files("complex-factory", SubmissionFiles::single("FCplx.cpp", source))
                    .map_err(|e| e.to_string())?;
                ensure!(r.status == SubmissionStatus::Queued, "new submission is {}", r.status);
                ids.push(r.id);
            }
            Op::Poll(i) if !ids.is_empty() => {
                let v = service.get_status(&ids[i % ids.len()]).map_err(|e| e.to_string())?;
                let solved = v.report.as_ref().is_some_and(|r| r.solved);
                ensure!((v.status == SubmissionStatus::Solved) == solved, "status {} vs report", v.status);
                ensure!(
                    v.report.is_some() == matches!(v.status, SubmissionStatus::Solved | SubmissionStatus::Unsolved),
                    "report presence in {}",
                    v.status
                );
            }
            Op::Hint(i) if !ids.is_empty() => {
                let id = &ids[i % ids.len()];
                let status = service.get_status(id).map_err(|e| e.to_string())?.status;
                match (service.request_hint(id), status) {
                    (Ok(h), SubmissionStatus::Unsolved) => {
                        match rungs.insert(id.clone(), h.rung) {
                            Some(p) => ensure!(h.rung > p || (h.exhausted && h.rung == p), "rung {} after {p}", h.rung),
                            None => ensure!(h.rung == 0, "first rung {}", h.rung),
                        }
                    }
                    (Err(ServiceError::AlreadySolved), SubmissionStatus::Solved) => {}
                    (Err(ServiceError::NotYetAssessed(_)), s)
                        if !matches!(s, SubmissionStatus::Solved | SubmissionStatus::Unsolved) => {}
                    (other, s) => return Err(format!("hint in {s}: {other:?}")),
                }
            }
            Op::Work => {
                if let Some(id) = service.next_queued() {
                    let r = service.run_assessment(&id).map_err(|e| e.to_string())?;
                    ensure!(r.status.is_terminal(), "worker left {id} {}", r.status);
                }
            }
            Op::CrashMidAssessment => {
                if let Some(id) = service.next_queued() {
                    service
                        .store()
                        .append(Event::AssessmentStarted { id })
                        .map_err(|e| e.to_string())?;
                }
                service = open(dir.path());
            }
            Op::Restart => service = open(dir.path()),
            _ => {}
        }
        for id in &ids {
            let v = service.get_status(id).map_err(|e| e.to_string())?;
            ensure!(v.status != SubmissionStatus::Assessing, "{id} stuck assessing");
            if let Some(r) = &v.report {
                let r = serde_json::to_value(r).unwrap();
                let first = reports.entry(id.clone()).or_insert_with(|| r.clone());
                ensure!(*first == r, "report of {id} changed");
            }
        }
    }

    let mut state: BTreeMap<String, &'static str> = BTreeMap::new();
    let mut finished: BTreeMap<String, usize> = BTreeMap::new();
    for entry in service.store().history() {
        let e = serde_json::to_value(&entry.event).unwrap();
        let id = e["id"].as_str().unwrap().to_string();
        let kind = e["type"].as_str().unwrap();
        let from = state.get(&id).copied();
        let Some(next) = legal(from, kind) else {
            return Err(format!("illegal {kind} from {from:?}"));
        };
        let next = next.unwrap_or(if e["report"]["solved"] == true { "solved" } else { "unsolved" });
        if kind == "assessment-finished" {
            *finished.entry(id.clone()).or_default() += 1;
        }
        state.insert(id, next);
    }
    ensure!(finished.values().all(|&n| n == 1), "a report was written twice");
    ensure!(state.len() == ids.len(), "history lost a submission");
    Ok(())
}

/// A submission caught mid-assessment by a crash comes back queued and can
/// still be assessed.
pub fn restart_requeues() -> Result<(), String> {
    let dir = tempfile::tempdir().unwrap();
    let service = open(dir.path());
    let id = service
        .submit_files("sorting-tsc", SubmissionFiles::single("sort.cpp", "VULN"))
        .map_err(|e| e.to_string())?
        .id;
    ensure!(service.next_queued().as_deref() == Some(id.as_str()), "queue order");
    service
        .store()
        .append(Event::AssessmentStarted { id: id.clone() })
        .map_err(|e| e.to_string())?;
    drop(service);

    let service = open(dir.path());
    let status = service.get_status(&id).map_err(|e| e.to_string())?.status;
    ensure!(status == SubmissionStatus::Queued, "after restart: {status}");
    ensure!(service.queue_length() == 1, "queue length {}", service.queue_length());
    service.drain().map_err(|e| e.to_string())?;
    let status = service.get_status(&id).map_err(|e| e.to_string())?.status;
    ensure!(status == SubmissionStatus::Unsolved, "after drain: {status}");
    let kinds: Vec<String> = service
        .store()
        .history()
        .into_iter()
        .map(|e| serde_json::to_value(&e.event).unwrap()["type"].as_str().unwrap().to_string())
        .collect();
    ensure!(
        kinds == ["submitted", "assessment-started", "requeued", "assessment-started", "assessment-finished"],
        "history {kinds:?}"
    );
    Ok(())
}
