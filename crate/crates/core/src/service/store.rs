//! Append-only event log of submissions, replayed into an in-memory
//! snapshot on open. One JSON object per line; the log is the single
//! serialization point for every state change.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coach::{AssessmentReport, CoachState, Hint};
use crate::submission::SubmissionFiles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubmissionStatus {
    Queued,
    Assessing,
    Solved,
    Unsolved,
    Error,
}

impl SubmissionStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, SubmissionStatus::Solved | SubmissionStatus::Unsolved | SubmissionStatus::Error)
    }

    /// The only status changes a record may go through. `assessing →
    /// queued` is the crash-recovery requeue.
    pub fn can_become(self, next: SubmissionStatus) -> bool {
        use SubmissionStatus::*;
        matches!(
            (self, next),
            (Queued, Assessing) | (Assessing, Solved) | (Assessing, Unsolved) | (Assessing, Error) | (Assessing, Queued)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SubmissionStatus::Queued => "queued",
            SubmissionStatus::Assessing => "assessing",
            SubmissionStatus::Solved => "solved",
            SubmissionStatus::Unsolved => "unsolved",
            SubmissionStatus::Error => "error",
        }
    }
}

impl fmt::Display for SubmissionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Event {
    Submitted {
        id: String,
        challenge_id: String,
        source_blob: SubmissionFiles,
        created_at: DateTime<Utc>,
    },
    AssessmentStarted {
        id: String,
    },
    AssessmentFinished {
        id: String,
        report: AssessmentReport,
    },
    AssessmentFailed {
        id: String,
        error: String,
    },
    Requeued {
        id: String,
    },
    HintRevealed {
        id: String,
        hint: Hint,
        coach_state: CoachState,
    },
}

impl Event {
    pub fn submission_id(&self) -> &str {
        match self {
            Event::Submitted { id, .. }
            | Event::AssessmentStarted { id }
            | Event::AssessmentFinished { id, .. }
            | Event::AssessmentFailed { id, .. }
            | Event::Requeued { id }
            | Event::HintRevealed { id, .. } => id,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Event::Submitted { .. } => "submitted",
            Event::AssessmentStarted { .. } => "assessment-started",
            Event::AssessmentFinished { .. } => "assessment-finished",
            Event::AssessmentFailed { .. } => "assessment-failed",
            Event::Requeued { .. } => "requeued",
            Event::HintRevealed { .. } => "hint-revealed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub id: String,
    pub challenge_id: String,
    pub source_blob: SubmissionFiles,
    pub created_at: DateTime<Utc>,
    pub status: SubmissionStatus,
    pub report: Option<AssessmentReport>,
    pub coach_state: CoachState,
    /// Hints revealed so far, in order.
    pub hints: Vec<Hint>,
    /// Why the assessment could not be completed (status `error`).
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("event log i/o: {0}")]
    Io(#[from] io::Error),
    #[error("event log line {line} is corrupt: {message}")]
    Corrupt { line: usize, message: String },
    #[error("submission {0} does not exist")]
    UnknownSubmission(String),
    #[error("submission {0} already exists")]
    DuplicateSubmission(String),
    #[error("illegal {event} event for submission {id} in status {status}")]
    IllegalTransition {
        id: String,
        status: SubmissionStatus,
        event: &'static str,
    },
}

fn next_record(current: Option<&SubmissionRecord>, event: &Event) -> Result<SubmissionRecord, StoreError> {
    let illegal = |r: &SubmissionRecord| StoreError::IllegalTransition {
        id: r.id.clone(),
        status: r.status,
        event: event.name(),
    };
    let moved = |r: &SubmissionRecord, to: SubmissionStatus| {
        if r.status.can_become(to) {
            let mut next = r.clone();
            next.status = to;
            Ok(next)
        } else {
            Err(illegal(r))
        }
    };
    let record = match (current, event) {
        (
            None,
            Event::Submitted {
                id,
                challenge_id,
                source_blob,
                created_at,
            },
        ) => {
            return Ok(SubmissionRecord {
                id: id.clone(),
                challenge_id: challenge_id.clone(),
                source_blob: source_blob.clone(),
                created_at: *created_at,
                status: SubmissionStatus::Queued,
                report: None,
                coach_state: CoachState::new(id.clone()),
                hints: Vec::new(),
                error: None,
            })
        }
        (Some(r), Event::Submitted { .. }) => return Err(StoreError::DuplicateSubmission(r.id.clone())),
        (None, other) => return Err(StoreError::UnknownSubmission(other.submission_id().to_string())),
        (Some(r), _) => r,
    };
    match event {
        Event::Submitted { .. } => unreachable!("handled above"),
        Event::AssessmentStarted { .. } => moved(record, SubmissionStatus::Assessing),
        Event::Requeued { .. } => moved(record, SubmissionStatus::Queued),
        Event::AssessmentFinished { report, .. } => {
            let to = if report.solved {
                SubmissionStatus::Solved
            } else {
                SubmissionStatus::Unsolved
            };
            // A report is written once; a second one would be a mutation.
            if record.report.is_some() {
                return Err(illegal(record));
            }
            let mut next = moved(record, to)?;
            next.report = Some(report.clone());
            Ok(next)
        }
        Event::AssessmentFailed { error, .. } => {
            let mut next = moved(record, SubmissionStatus::Error)?;
            next.error = Some(error.clone());
            Ok(next)
        }
        Event::HintRevealed { hint, coach_state, .. } => {
            if record.status != SubmissionStatus::Unsolved {
                return Err(illegal(record));
            }
            let mut next = record.clone();
            next.coach_state = coach_state.clone();
            next.hints.push(hint.clone());
            Ok(next)
        }
    }
}

#[derive(Debug, Default)]
struct Snapshot {
    records: BTreeMap<String, SubmissionRecord>,
    /// Submission ids in submission order.
    order: Vec<String>,
    log: Vec<LogEntry>,
}

impl Snapshot {
    fn apply(&mut self, entry: LogEntry) -> Result<SubmissionRecord, StoreError> {
        let id = entry.event.submission_id().to_string();
        let next = next_record(self.records.get(&id), &entry.event)?;
        if matches!(entry.event, Event::Submitted { .. }) {
            self.order.push(id.clone());
        }
        self.records.insert(id, next.clone());
        self.log.push(entry);
        Ok(next)
    }
}

struct Inner {
    file: File,
    snapshot: Snapshot,
}

/// The submission store: one event log file plus its replayed snapshot.
pub struct EventStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl fmt::Debug for EventStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventStore").field("path", &self.path).finish()
    }
}

impl EventStore {
    /// Opens (or creates) the log at `path` and replays it. A torn final
    /// line, left by a crash mid-write, is cut off; corruption anywhere else
    /// is an error. Records found mid-assessment are re-queued.
    pub fn open(path: impl AsRef<Path>) -> Result<EventStore, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        let mut snapshot = Snapshot::default();
        let mut good_len = 0u64;
        {
            let mut reader = BufReader::new(&file);
            let mut line = String::new();
            let mut number = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 {
                    break;
                }
                number += 1;
                let complete = line.ends_with('\n');
                match serde_json::from_str::<LogEntry>(line.trim_end()) {
                    Ok(entry) if complete => {
                        snapshot.apply(entry).map_err(|e| StoreError::Corrupt {
                            line: number,
                            message: e.to_string(),
                        })?;
                        good_len += n as u64;
                    }
                    _ if !complete => break,
                    Ok(_) => unreachable!(),
                    Err(e) => {
                        return Err(StoreError::Corrupt {
                            line: number,
                            message: e.to_string(),
                        })
                    }
                }
            }
        }
        if file.seek(SeekFrom::End(0))? != good_len {
            file.set_len(good_len)?;
        }
        let store = EventStore {
            path,
            inner: Mutex::new(Inner { file, snapshot }),
        };
        let stranded: Vec<String> = store
            .records()
            .into_iter()
            .filter(|r| r.status == SubmissionStatus::Assessing)
            .map(|r| r.id)
            .collect();
        for id in stranded {
            store.append(Event::Requeued { id })?;
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Validates `event` against the current state, makes it durable, then
    /// applies it. Returns the record as it is after the event.
    pub fn append(&self, event: Event) -> Result<SubmissionRecord, StoreError> {
        self.append_with(event.submission_id().to_string().as_str(), |_| Ok::<_, StoreError>(event))
    }

    /// Like [`append`](Self::append), but builds the event from the current
    /// record while holding the log lock, so read-modify-write sequences
    /// (such as revealing the next hint) cannot interleave.
    pub fn append_with<E>(
        &self,
        id: &str,
        make: impl FnOnce(Option<&SubmissionRecord>) -> Result<Event, E>,
    ) -> Result<SubmissionRecord, E>
    where
        E: From<StoreError>,
    {
        let mut inner = self.lock();
        let event = make(inner.snapshot.records.get(id))?;
        next_record(inner.snapshot.records.get(event.submission_id()), &event)?;
        let entry = LogEntry {
            seq: inner.snapshot.log.len() as u64 + 1,
            at: Utc::now(),
            event,
        };
        let mut line = serde_json::to_string(&entry).expect("log entries serialize");
        line.push('\n');
        inner.file.write_all(line.as_bytes()).map_err(StoreError::from)?;
        inner.file.sync_data().map_err(StoreError::from)?;
        Ok(inner.snapshot.apply(entry)?)
    }

    pub fn get(&self, id: &str) -> Option<SubmissionRecord> {
        self.lock().snapshot.records.get(id).cloned()
    }

    /// All records in submission order.
    pub fn records(&self) -> Vec<SubmissionRecord> {
        let inner = self.lock();
        inner
            .snapshot
            .order
            .iter()
            .map(|id| inner.snapshot.records[id].clone())
            .collect()
    }

    /// Ids of queued records, oldest first.
    pub fn queued(&self) -> Vec<String> {
        self.records()
            .into_iter()
            .filter(|r| r.status == SubmissionStatus::Queued)
            .map(|r| r.id)
            .collect()
    }

    /// The full event history, oldest first.
    pub fn history(&self) -> Vec<LogEntry> {
        self.lock().snapshot.log.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn submitted(id: &str) -> Event {
        Event::Submitted {
            id: id.into(),
            challenge_id: "c".into(),
            source_blob: SubmissionFiles::single("a.cpp", "int x;"),
            created_at: Utc::now(),
        }
    }

    #[test]
    fn transition_table() {
        use SubmissionStatus::*;
        let all = [Queued, Assessing, Solved, Unsolved, Error];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|&a| all.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a.can_become(b))
            .collect();
        assert_eq!(
            allowed,
            vec![(Queued, Assessing), (Assessing, Queued), (Assessing, Solved), (Assessing, Unsolved), (Assessing, Error)]
        );
        assert!(all.iter().filter(|s| s.is_terminal()).all(|s| all.iter().all(|t| !s.can_become(*t))));
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        {
            let store = EventStore::open(&path).unwrap();
            store.append(submitted("s1")).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"seq":2,"at":"2026-01-01T00:00:00Z","type":"assess"#).unwrap();
        drop(f);
        let store = EventStore::open(&path).unwrap();
        assert_eq!(store.history().len(), 1);
        store.append(Event::AssessmentStarted { id: "s1".into() }).unwrap();
        drop(store);
        let store = EventStore::open(&path).unwrap();
        // The stranded assessment was re-queued on the second open.
        assert_eq!(store.get("s1").unwrap().status, SubmissionStatus::Queued);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(EventStore::open(&path), Err(StoreError::Corrupt { line: 1, .. })));
    }
}
