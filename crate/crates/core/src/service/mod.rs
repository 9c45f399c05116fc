//! The submission service: challenge catalogue, submission queue with a
//! bounded worker pool, persistent records and hints, over a small JSON
//! HTTP API.

mod http;
pub mod store;

use std::collections::{BTreeMap, VecDeque};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use base64::Engine;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Notify;

use crate::assess::Assessor;
use crate::coach::{AssessmentReport, Coach, CoachError, Hint};
use crate::registry::{AssessorKind, Challenge, Corpus, GuidelineRef, RegistryError};
use crate::submission::SubmissionFiles;

pub use http::router;
pub use store::{Event, EventStore, LogEntry, StoreError, SubmissionRecord, SubmissionStatus};

pub const MAX_SOURCE_BYTES: usize = 256 * 1024;
pub const DEFAULT_WORKERS: usize = 2;
pub const EVENTS_FILE: &str = "events.jsonl";
pub const CORPUS_ENV: &str = "CODE_DOJO_CORPUS";
pub const DATA_DIR_ENV: &str = "CODE_DOJO_DATA_DIR";
pub const BIND_ENV: &str = "CODE_DOJO_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown challenge {0:?}")]
    UnknownChallenge(String),
    #[error("submission is {size} bytes; the limit is {limit}")]
    PayloadTooLarge { size: usize, limit: usize },
    #[error("unknown submission {0:?}")]
    UnknownSubmission(String),
    #[error("submission has not been assessed (status {0})")]
    NotYetAssessed(SubmissionStatus),
    #[error("submission already solved the challenge")]
    AlreadySolved,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Stable machine-readable name used in error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::UnknownChallenge(_) => "UnknownChallenge",
            ServiceError::PayloadTooLarge { .. } => "PayloadTooLarge",
            ServiceError::UnknownSubmission(_) => "UnknownSubmission",
            ServiceError::NotYetAssessed(_) => "NotYetAssessed",
            ServiceError::AlreadySolved => "AlreadySolved",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::Store(_) | ServiceError::Registry(_) | ServiceError::Io(_) => "Internal",
        }
    }
}

/// Whatever turns a submission into a report. The real one compiles and
/// runs code; tests substitute something fast.
pub trait SubmissionAssessor: Send + Sync {
    fn assess(&self, challenge: &Challenge, submission_id: &str, files: &SubmissionFiles) -> Result<AssessmentReport, String>;
}

impl SubmissionAssessor for Assessor {
    fn assess(&self, challenge: &Challenge, submission_id: &str, files: &SubmissionFiles) -> Result<AssessmentReport, String> {
        Assessor::assess(self, challenge, submission_id, files).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeSummary {
    pub id: String,
    pub title: String,
    pub assessors: Vec<AssessorKind>,
    pub guidelines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeView {
    pub id: String,
    pub title: String,
    pub assessors: Vec<AssessorKind>,
    pub guidelines: Vec<GuidelineRef>,
    pub functional_tests: Vec<String>,
    /// Skeleton file name → contents.
    pub skeleton: SubmissionFiles,
    /// File a single-text submission is stored as.
    pub primary_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionView {
    pub id: String,
    pub challenge_id: String,
    pub status: SubmissionStatus,
    pub created_at: DateTime<Utc>,
    pub source: SubmissionFiles,
    pub report: Option<AssessmentReport>,
    pub hints: Vec<Hint>,
    pub error: Option<String>,
    /// Submissions waiting for a worker, service-wide.
    pub queue_length: usize,
}

/// Body of a submission request: exactly one of `source` (raw text),
/// `source_base64`, or `files`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_base64: Option<String>,
    /// Name for `source`/`source_base64`; defaults to the challenge's
    /// primary file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub id: String,
    pub status: SubmissionStatus,
}

/// The first compilable skeleton file, which single-text submissions
/// replace.
pub fn primary_file(challenge: &Challenge) -> String {
    let files = &challenge.manifest.skeleton_files;
    files
        .iter()
        .find(|f| f.ends_with(".cpp") || f.ends_with(".cc") || f.ends_with(".c"))
        .or(files.first())
        .map(|f| f.rsplit('/').next().unwrap_or(f).to_string())
        .unwrap_or_default()
}

impl SubmitRequest {
    pub fn into_files(self, challenge: &Challenge) -> Result<SubmissionFiles, ServiceError> {
        let name = self.file_name.unwrap_or_else(|| primary_file(challenge));
        let mut files = SubmissionFiles::default();
        match (self.source, self.source_base64, self.files) {
            (Some(text), None, None) => files.insert_text(name, text),
            (None, Some(b64), None) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(b64.trim())
                    .map_err(|e| ServiceError::BadRequest(format!("source_base64: {e}")))?;
                if bytes.len() > MAX_SOURCE_BYTES {
                    return Err(ServiceError::PayloadTooLarge {
                        size: bytes.len(),
                        limit: MAX_SOURCE_BYTES,
                    });
                }
                files.insert(name, bytes);
            }
            (None, None, Some(map)) => {
                for (k, v) in map {
                    files.insert_text(k, v);
                }
            }
            _ => {
                return Err(ServiceError::BadRequest(
                    "give exactly one of source, source_base64 or files".into(),
                ))
            }
        }
        if files.is_empty() {
            return Err(ServiceError::BadRequest("no files submitted".into()));
        }
        files.validate_names().map_err(ServiceError::BadRequest)?;
        let size = files.total_size();
        if size > MAX_SOURCE_BYTES {
            return Err(ServiceError::PayloadTooLarge {
                size,
                limit: MAX_SOURCE_BYTES,
            });
        }
        Ok(files)
    }
}

/// Service state shared by the HTTP handlers and the workers.
pub struct Service {
    corpus: Arc<Corpus>,
    store: EventStore,
    assessor: Arc<dyn SubmissionAssessor>,
    queue: Mutex<VecDeque<String>>,
    wake: Notify,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service").field("store", &self.store).finish_non_exhaustive()
    }
}

impl Service {
    /// Opens the store in `data_dir` and queues every record that is
    /// waiting for assessment, including ones interrupted by a restart.
    pub fn open(corpus: Arc<Corpus>, data_dir: impl Into<PathBuf>, assessor: Arc<dyn SubmissionAssessor>) -> Result<Service, ServiceError> {
        let store = EventStore::open(data_dir.into().join(EVENTS_FILE))?;
        let queue = store.queued().into_iter().collect();
        Ok(Service {
            corpus,
            store,
            assessor,
            queue: Mutex::new(queue),
            wake: Notify::new(),
        })
    }

    pub fn store(&self) -> &EventStore {
        &self.store
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    fn challenge(&self, id: &str) -> Result<&Challenge, ServiceError> {
        self.corpus
            .get(id)
            .map_err(|_| ServiceError::UnknownChallenge(id.to_string()))
    }

    pub fn list_challenges(&self) -> Vec<ChallengeSummary> {
        self.corpus
            .challenges()
            .iter()
            .map(|c| ChallengeSummary {
                id: c.manifest.id.clone(),
                title: c.manifest.title.clone(),
                assessors: c.manifest.assessors.iter().copied().collect(),
                guidelines: c.manifest.guidelines.iter().map(|g| g.rule_id.clone()).collect(),
            })
            .collect()
    }

    pub fn get_challenge(&self, id: &str) -> Result<ChallengeView, ServiceError> {
        let c = self.challenge(id)?;
        Ok(ChallengeView {
            id: c.manifest.id.clone(),
            title: c.manifest.title.clone(),
            assessors: c.manifest.assessors.iter().copied().collect(),
            guidelines: c.manifest.guidelines.clone(),
            functional_tests: c.manifest.functional_tests.clone(),
            skeleton: c.skeleton()?,
            primary_file: primary_file(c),
        })
    }

    pub fn submit(&self, challenge_id: &str, request: SubmitRequest) -> Result<SubmitResponse, ServiceError> {
        let challenge = self.challenge(challenge_id)?;
        let files = request.into_files(challenge)?;
        self.submit_files(challenge_id, files)
    }

    pub fn submit_files(&self, challenge_id: &str, files: SubmissionFiles) -> Result<SubmitResponse, ServiceError> {
        self.challenge(challenge_id)?;
        let size = files.total_size();
        if size > MAX_SOURCE_BYTES {
            return Err(ServiceError::PayloadTooLarge {
                size,
                limit: MAX_SOURCE_BYTES,
            });
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let record = self.store.append(Event::Submitted {
            id: id.clone(),
            challenge_id: challenge_id.to_string(),
            source_blob: files,
            created_at: Utc::now(),
        })?;
        self.lock_queue().push_back(id.clone());
        self.wake.notify_one();
        Ok(SubmitResponse {
            id,
            status: record.status,
        })
    }

    fn lock_queue(&self) -> std::sync::MutexGuard<'_, VecDeque<String>> {
        self.queue.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn queue_length(&self) -> usize {
        self.lock_queue().len()
    }

    pub fn get_status(&self, id: &str) -> Result<SubmissionView, ServiceError> {
        let r = self
            .store
            .get(id)
            .ok_or_else(|| ServiceError::UnknownSubmission(id.to_string()))?;
        Ok(SubmissionView {
            id: r.id,
            challenge_id: r.challenge_id,
            status: r.status,
            created_at: r.created_at,
            source: r.source_blob,
            report: r.report,
            hints: r.hints,
            error: r.error,
            queue_length: self.queue_length(),
        })
    }

    /// Reveals the next hint for an unsolved submission and records it.
    pub fn request_hint(&self, id: &str) -> Result<Hint, ServiceError> {
        let record = self.store.append_with(id, |record| {
            let record = record.ok_or_else(|| ServiceError::UnknownSubmission(id.to_string()))?;
            let report = match (record.status, &record.report) {
                (SubmissionStatus::Solved, _) => return Err(ServiceError::AlreadySolved),
                (SubmissionStatus::Unsolved, Some(report)) => report,
                (status, _) => return Err(ServiceError::NotYetAssessed(status)),
            };
            let challenge = self.challenge(&record.challenge_id)?;
            let (hint, coach_state) = Coach::for_challenge(challenge)
                .next_hint(&record.coach_state, report)
                .map_err(|e| match e {
                    CoachError::AlreadySolved => ServiceError::AlreadySolved,
                })?;
            Ok(Event::HintRevealed {
                id: id.to_string(),
                hint,
                coach_state,
            })
        })?;
        Ok(record.hints.last().cloned().expect("a hint was just appended"))
    }

    /// Takes the oldest queued submission, if any.
    pub fn next_queued(&self) -> Option<String> {
        self.lock_queue().pop_front()
    }

    /// Assesses one submission, recording start and outcome. Returns the
    /// final record.
    pub fn run_assessment(&self, id: &str) -> Result<SubmissionRecord, ServiceError> {
        let record = self.store.append(Event::AssessmentStarted { id: id.to_string() })?;
        let outcome = match self.corpus.get(&record.challenge_id) {
            Ok(challenge) => {
                let assessor = Arc::clone(&self.assessor);
                let files = record.source_blob.clone();
                std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| assessor.assess(challenge, id, &files)))
                    .unwrap_or_else(|_| Err("assessor panicked".to_string()))
            }
            Err(e) => Err(e.to_string()),
        };
        let event = match outcome {
            Ok(mut report) => {
                report.submission_id = id.to_string();
                Event::AssessmentFinished {
                    id: id.to_string(),
                    report,
                }
            }
            Err(error) => Event::AssessmentFailed {
                id: id.to_string(),
                error,
            },
        };
        Ok(self.store.append(event)?)
    }

    /// Runs queued assessments until the queue is empty; returns how many
    /// ran. Useful without an async runtime.
    pub fn drain(&self) -> Result<usize, ServiceError> {
        let mut n = 0;
        while let Some(id) = self.next_queued() {
            self.run_assessment(&id)?;
            n += 1;
        }
        Ok(n)
    }

    /// Starts `workers` tasks that consume the queue for as long as the
    /// runtime lives.
    pub fn spawn_workers(self: &Arc<Self>, workers: usize) {
        for _ in 0..workers.max(1) {
            let service = Arc::clone(self);
            tokio::spawn(async move {
                loop {
                    let Some(id) = service.next_queued() else {
                        service.wake.notified().await;
                        continue;
                    };
                    let worker = Arc::clone(&service);
                    let job = tokio::task::spawn_blocking(move || worker.run_assessment(&id)).await;
                    match job {
                        Ok(Ok(_)) => {}
                        Ok(Err(e)) => eprintln!("assessment worker: {e}"),
                        Err(e) => eprintln!("assessment worker: {e}"),
                    }
                }
            });
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub corpus: PathBuf,
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    pub workers: usize,
    /// Directory of the web front end, served under `/`.
    pub static_dir: Option<PathBuf>,
}

/// Loads the corpus, opens the store and serves the API until interrupted.
pub async fn serve(config: ServiceConfig, assessor: Arc<dyn SubmissionAssessor>) -> Result<(), ServiceError> {
    let corpus = Arc::new(crate::registry::load_corpus(&config.corpus)?);
    let service = Arc::new(Service::open(corpus, &config.data_dir, assessor)?);
    service.spawn_workers(config.workers);
    let app = router(Arc::clone(&service), config.static_dir.clone());
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    eprintln!("code-dojo listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
