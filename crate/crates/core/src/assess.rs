//! The assessment pipeline: stage a submission, run the functional tests,
//! run every assessor the challenge names, and build the report.

use std::path::PathBuf;
use std::time::Instant;

use thiserror::Error;

use crate::coach::{build_report, AssessmentReport, AssessorSummary};
use crate::finding::{merge_findings, Channel, Finding, FUNCTIONAL_GUIDELINE};
use crate::memory::{self, interface_finding, MemoryError};
use crate::race::{self, RaceError, RaceJobConfig, RACE_GUIDELINE};
use crate::registry::{AssessorKind, Challenge, Severity};
use crate::sandbox::{BuildArtifact, BuildProfile, Sandbox, SandboxError};
use crate::submission::{stage, StagedSources, SubmissionFiles};
use crate::tsc::{self, DebuggerConfig, StepCounter, StepGranularity, TscError, TSC_GUIDELINE};

#[derive(Debug, Error)]
pub enum AssessError {
    #[error("invalid submission: {0}")]
    InvalidSubmission(String),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Tsc(#[from] TscError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Race(#[from] RaceError),
    #[error("challenge configuration: {0}")]
    Config(String),
}

/// Settings of the TSC assessor for one challenge.
#[derive(Debug, Clone, PartialEq)]
pub struct TscSettings {
    pub function: String,
    pub input_size: usize,
    pub seed: u64,
    pub threshold: f64,
    pub granularity: StepGranularity,
    pub step_ceiling: u64,
}

impl TscSettings {
    pub fn from_challenge(challenge: &Challenge) -> Result<Self, AssessError> {
        let m = &challenge.manifest;
        let get = |k: &str| m.config(AssessorKind::Tsc, k);
        let parse = |k: &str| -> Result<Option<u64>, AssessError> {
            get(k).map(|v| v.parse().map_err(|_| AssessError::Config(format!("tsc.{k} = {v:?}")))).transpose()
        };
        Ok(TscSettings {
            function: get("function")
                .ok_or_else(|| AssessError::Config("tsc.function is not set".into()))?
                .to_string(),
            input_size: parse("input_size")?.unwrap_or(tsc::DEFAULT_INPUT_SIZE as u64) as usize,
            seed: parse("seed")?.unwrap_or(0),
            threshold: get("threshold")
                .map(|v| v.parse().map_err(|_| AssessError::Config(format!("tsc.threshold = {v:?}"))))
                .transpose()?
                .unwrap_or(0.0),
            granularity: get("granularity")
                .map(|v| v.parse().map_err(AssessError::Config))
                .transpose()?
                .unwrap_or(StepGranularity::SourceLine),
            step_ceiling: parse("step_ceiling")?.unwrap_or(tsc::DEFAULT_STEP_CEILING),
        })
    }
}

/// Runs whole assessments. Cheap to clone.
#[derive(Debug, Clone, Default)]
pub struct Assessor {
    pub sandbox: Sandbox,
    pub debugger: DebuggerConfig,
}

struct Outcome {
    findings: Vec<Finding>,
    summary: AssessorSummary,
}

fn summary(passed: bool, text: String) -> AssessorSummary {
    AssessorSummary { passed, summary: text }
}

fn functional(source: &str, evidence: String) -> Finding {
    Finding {
        guideline: FUNCTIONAL_GUIDELINE.into(),
        channel: Channel::FunctionalTest,
        evidence,
        location: None,
        severity: Severity::High,
        source: Some(source.into()),
    }
}

fn with_wrappers(challenge: &Challenge, staged: &StagedSources) -> Vec<PathBuf> {
    let mut sources = staged.files().to_vec();
    sources.extend(challenge.manifest.wrapper_files.iter().map(|f| challenge.path(f)));
    sources
}

impl Assessor {
    pub fn new(sandbox: Sandbox) -> Self {
        Assessor {
            sandbox,
            debugger: DebuggerConfig::default(),
        }
    }

    /// Assesses `files` (overlaid on the challenge skeleton).
    pub fn assess(&self, challenge: &Challenge, submission_id: &str, files: &SubmissionFiles) -> Result<AssessmentReport, AssessError> {
        files.validate_names().map_err(AssessError::InvalidSubmission)?;
        let staged = stage(challenge, files).map_err(|e| AssessError::Sandbox(SandboxError::SandboxSetupError(e)))?;
        self.assess_staged(challenge, submission_id, &staged)
    }

    pub fn assess_staged(&self, challenge: &Challenge, submission_id: &str, staged: &StagedSources) -> Result<AssessmentReport, AssessError> {
        let mut findings = memory::run_functional_tests(&self.sandbox, challenge, staged)?;
        let mut verdicts = std::collections::BTreeMap::new();
        for kind in &challenge.manifest.assessors {
            let started = Instant::now();
            let outcome = match kind {
                AssessorKind::Tsc => self.run_tsc(challenge, staged)?,
                AssessorKind::Memory => self.run_memory(challenge, staged)?,
                AssessorKind::Race => self.run_race(challenge, staged)?,
            };
            let mut s = outcome.summary;
            s.summary = format!("{} ({:.1}s)", s.summary, started.elapsed().as_secs_f64());
            verdicts.insert(kind.as_str().to_string(), s);
            findings.extend(outcome.findings);
        }
        let findings = merge_findings(findings);
        let functional_pass = !findings.iter().any(Finding::is_functional);
        let mut report = build_report(submission_id, findings, functional_pass);
        report.per_assessor_verdicts = verdicts;
        Ok(report)
    }

    /// Builds `files` together with the challenge's wrapper files, the way
    /// the TSC and race assessors do.
    pub fn build_submission(&self, challenge: &Challenge, files: &SubmissionFiles, profile: &BuildProfile) -> Result<BuildArtifact, AssessError> {
        let staged = stage(challenge, files).map_err(|e| AssessError::Sandbox(SandboxError::SandboxSetupError(e)))?;
        Ok(self.sandbox.compile(&with_wrappers(challenge, &staged), profile)?)
    }

    fn build(&self, challenge: &Challenge, staged: &StagedSources, profile: &BuildProfile) -> Result<Result<BuildArtifact, Finding>, AssessError> {
        match self.sandbox.compile(&with_wrappers(challenge, staged), profile) {
            Ok(a) => Ok(Ok(a)),
            Err(e @ SandboxError::CompileError { .. }) | Err(e @ SandboxError::DuplicateSource(_)) => {
                Ok(Err(interface_finding("wrapper", &e)))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn run_tsc(&self, challenge: &Challenge, staged: &StagedSources) -> Result<Outcome, AssessError> {
        let settings = TscSettings::from_challenge(challenge)?;
        let artifact = match self.build(challenge, staged, &BuildProfile::debug())? {
            Ok(a) => a,
            Err(f) => {
                return Ok(Outcome {
                    findings: vec![f],
                    summary: summary(false, "not measured: the wrapper does not build".into()),
                })
            }
        };
        let inputs = tsc::default_inputs(settings.input_size, settings.seed);
        let mut counter = StepCounter::with_config(
            self.debugger.clone(),
            &artifact,
            &settings.function,
            settings.granularity,
            settings.step_ceiling,
        );
        let verdict = match tsc::assess_with(&mut counter, &inputs, settings.threshold) {
            Ok(v) => v,
            Err(TscError::SymbolNotFound(sym)) => {
                return Ok(Outcome {
                    findings: vec![functional("tsc", format!("function {sym} is missing from the submission"))],
                    summary: summary(false, format!("not measured: {sym} not found")),
                })
            }
            Err(TscError::StepCeilingExceeded { ceiling }) => {
                return Ok(Outcome {
                    findings: vec![functional(
                        "tsc",
                        format!("{} did not return within {ceiling} steps", settings.function),
                    )],
                    summary: summary(false, "not measured: step ceiling exceeded".into()),
                })
            }
            Err(e) => return Err(e.into()),
        };
        let counts: Vec<String> = verdict
            .samples
            .iter()
            .map(|s| format!("{}={}", s.input_label, s.count))
            .collect();
        let text = format!(
            "{} steps per input ({}): {}; spread {:.1}% vs threshold {:.1}%",
            settings.granularity,
            settings.function,
            counts.join(", "),
            verdict.relative_spread * 100.0,
            verdict.threshold * 100.0
        );
        let findings = if verdict.detected {
            vec![Finding {
                guideline: TSC_GUIDELINE.into(),
                channel: Channel::Instrumentation,
                evidence: format!("step count depends on the input values: {text}"),
                location: None,
                severity: challenge
                    .manifest
                    .guideline(TSC_GUIDELINE)
                    .map_or(Severity::High, |g| g.severity),
                source: Some("tsc".into()),
            }]
        } else {
            vec![]
        };
        Ok(Outcome {
            findings,
            summary: summary(!verdict.detected, text),
        })
    }

    fn run_memory(&self, challenge: &Challenge, staged: &StagedSources) -> Result<Outcome, AssessError> {
        let findings = memory::assess_security_tests(&self.sandbox, challenge, staged)?;
        let vulnerabilities = findings.iter().filter(|f| !f.is_functional()).count();
        let text = format!(
            "{} security test(s), {vulnerabilities} finding(s)",
            challenge.manifest.security_tests.len()
        );
        Ok(Outcome {
            summary: summary(findings.is_empty(), text),
            findings,
        })
    }

    fn run_race(&self, challenge: &Challenge, staged: &StagedSources) -> Result<Outcome, AssessError> {
        let artifact = match self.build(challenge, staged, &BuildProfile::plain())? {
            Ok(a) => a,
            Err(f) => {
                return Ok(Outcome {
                    findings: vec![f],
                    summary: summary(false, "not attacked: the wrapper does not build".into()),
                })
            }
        };
        let config = RaceJobConfig::from_manifest(&challenge.manifest);
        let verdict = race::detect_toctou(&self.sandbox, &artifact, &config)?;
        let findings = if verdict.detected {
            vec![Finding {
                guideline: RACE_GUIDELINE.into(),
                channel: Channel::SecurityTest,
                evidence: verdict.evidence.clone(),
                location: None,
                severity: challenge
                    .manifest
                    .guideline(RACE_GUIDELINE)
                    .map_or(Severity::High, |g| g.severity),
                source: Some("race".into()),
            }]
        } else {
            vec![]
        };
        Ok(Outcome {
            findings,
            summary: summary(!verdict.detected, verdict.evidence),
        })
    }
}
