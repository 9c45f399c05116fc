//! Memory-safety assessor: security-test drivers built with address, leak
//! and undefined-behavior instrumentation, and a fixed mapping from report
//! categories to guidelines.

mod report;

use std::path::PathBuf;
use std::sync::LazyLock;
use std::thread;
use std::time::Duration;

use regex::Regex;
use thiserror::Error;

use crate::finding::{merge_findings, Channel, Finding, Location, FUNCTIONAL_GUIDELINE};
use crate::registry::{functional_test_path, AssessorKind, Challenge, ChallengeManifest, SecurityTest, Severity};
use crate::sandbox::{BuildProfile, ExecLimits, ExecRequest, ExecutionResult, Sandbox, SandboxError};
use crate::submission::StagedSources;

pub use report::{normalize_evidence, parse_runtime_report, ParsedReport, ReportCategory, ReportFragment};

/// Printed by a driver that detects a violation by itself.
pub const SECURITY_FAIL_MARKER: &str = "SECURITY-TEST-FAIL:";
/// Printed by a functional test on failure.
pub const FUNCTIONAL_FAIL_MARKER: &str = "FUNCTIONAL-TEST-FAIL:";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

const BASE_ASAN_OPTIONS: &str = "detect_leaks=1:halt_on_error=1:abort_on_error=0:exitcode=23:color=never";
const BASE_UBSAN_OPTIONS: &str = "print_stacktrace=1:color=never";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("driver {test} does not build against the submission")]
    CompileError {
        test: String,
        #[source]
        source: SandboxError,
    },
    #[error("driver {test} exceeded {limit:?}")]
    Timeout { test: String, limit: Duration },
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

/// Guidelines a report category stands for. Leaks depend on whether the
/// submission declares a destructor: without one the memory is never given
/// back (MEM31-C); with one it is released the wrong way (MEM51-CPP).
/// `Other` defers to the security test's own targets.
pub fn guidelines_for(category: ReportCategory, has_destructor: bool) -> &'static [&'static str] {
    match category {
        ReportCategory::DoubleFree => &["CWE-315"],
        ReportCategory::HeapUseAfterFree => &["CWE-416", "EXP45-CPP"],
        ReportCategory::HeapBufferOverflow | ReportCategory::StackBufferOverflow => &["CTR50-CPP"],
        ReportCategory::UninitializedRead => &["EXP35-CPP"],
        ReportCategory::MemoryLeak if has_destructor => &["MEM51-CPP"],
        ReportCategory::MemoryLeak => &["MEM31-C"],
        ReportCategory::AllocDeallocMismatch => &["MEM51-CPP"],
        ReportCategory::UndefinedBehavior => &["EXP45-CPP"],
        ReportCategory::Other => &[],
    }
}

/// Every guideline the fixed category mapping can produce.
pub fn mapped_guidelines() -> Vec<&'static str> {
    let mut ids: Vec<&'static str> = ReportCategory::ALL
        .iter()
        .flat_map(|c| {
            guidelines_for(*c, false)
                .iter()
                .chain(guidelines_for(*c, true))
                .copied()
        })
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

static DESTRUCTOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"~\s*\w+\s*\(").unwrap());

pub fn declares_destructor(source: &str) -> bool {
    DESTRUCTOR.is_match(source)
}

/// Files from `wrapper_files` that are headers, made available to every
/// driver build.
fn harness_headers(challenge: &Challenge) -> Vec<PathBuf> {
    challenge
        .manifest
        .wrapper_files
        .iter()
        .filter(|f| [".h", ".hpp", ".hh"].iter().any(|ext| f.ends_with(ext)))
        .map(|f| challenge.path(f))
        .collect()
}

fn severity_of(manifest: &ChallengeManifest, guideline: &str) -> Severity {
    manifest.guideline(guideline).map(|g| g.severity).unwrap_or(Severity::Medium)
}

fn memory_timeout(manifest: &ChallengeManifest) -> Duration {
    manifest
        .config(AssessorKind::Memory, "timeout_s")
        .and_then(|v| v.parse().ok())
        .map(Duration::from_secs)
        .unwrap_or(DEFAULT_TIMEOUT)
}

/// Turns the outcome of one driver run into findings.
pub fn findings_from_run(
    manifest: &ChallengeManifest,
    test: &SecurityTest,
    result: &ExecutionResult,
    submission_files: &[String],
    has_destructor: bool,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    for block in &result.runtime_reports {
        let ParsedReport::Fragment(fragment) = parse_runtime_report(block) else {
            continue;
        };
        let in_submission = fragment.file.as_ref().is_some_and(|f| submission_files.contains(f));
        let site = match (&fragment.file, fragment.line) {
            (Some(file), Some(line)) if in_submission => Some(Location {
                file: file.clone(),
                line,
            }),
            _ => None,
        };
        // A leak has no faulting line: the allocation site is evidence, not
        // the place where the guideline is violated.
        let (location, evidence) = if fragment.category == ReportCategory::MemoryLeak {
            let evidence = match &site {
                Some(loc) => format!("{} (allocated at {loc})", fragment.summary),
                None => fragment.summary.clone(),
            };
            (None, evidence)
        } else {
            (site, fragment.summary.clone())
        };
        let mapped = guidelines_for(fragment.category, has_destructor);
        let guidelines: Vec<&str> = if mapped.is_empty() {
            test.target_guidelines.iter().map(String::as_str).collect()
        } else {
            mapped.to_vec()
        };
        for g in guidelines {
            findings.push(Finding {
                guideline: g.to_string(),
                channel: Channel::Instrumentation,
                evidence: format!("{}: {evidence}", fragment.category),
                location: location.clone(),
                severity: severity_of(manifest, g),
                source: Some(test.id.clone()),
            });
        }
    }

    let stdout = result.stdout_text();
    let markers: Vec<&str> = stdout
        .lines()
        .filter_map(|l| l.split_once(SECURITY_FAIL_MARKER).map(|(_, m)| m.trim()))
        .collect();
    let mut self_reported = |evidence: String| {
        for g in &test.target_guidelines {
            findings.push(Finding {
                guideline: g.clone(),
                channel: Channel::SecurityTest,
                evidence: evidence.clone(),
                location: None,
                severity: severity_of(manifest, g),
                source: Some(test.id.clone()),
            });
        }
    };
    for m in &markers {
        self_reported(format!("security test {}: {m}", test.id));
    }
    if markers.is_empty() && result.runtime_reports.is_empty() && !result.exit_status.success() {
        self_reported(format!("security test {} terminated unexpectedly ({})", test.id, result.exit_status));
    }
    findings
}

/// Builds one driver against the submission with instrumentation and runs
/// it. An empty result means the driver completed cleanly.
pub fn run_security_test(
    sandbox: &Sandbox,
    challenge: &Challenge,
    staged: &StagedSources,
    test: &SecurityTest,
) -> Result<Vec<Finding>, MemoryError> {
    let source = staged.read_all().map_err(|e| MemoryError::Sandbox(SandboxError::SandboxSetupError(e)))?;
    run_security_test_with(sandbox, challenge, staged, test, declares_destructor(&source))
}

fn run_security_test_with(
    sandbox: &Sandbox,
    challenge: &Challenge,
    staged: &StagedSources,
    test: &SecurityTest,
    has_destructor: bool,
) -> Result<Vec<Finding>, MemoryError> {
    let mut sources = staged.files().to_vec();
    sources.push(challenge.path(&test.driver_source));
    sources.extend(harness_headers(challenge));
    let artifact = sandbox
        .compile(&sources, &BuildProfile::sanitized())
        .map_err(|source| MemoryError::CompileError {
            test: test.id.clone(),
            source,
        })?;

    let mut asan = BASE_ASAN_OPTIONS.to_string();
    if let Some(extra) = &test.sanitizer_options {
        asan.push(':');
        asan.push_str(extra);
    }
    let limit = memory_timeout(&challenge.manifest);
    let request = ExecRequest {
        env: vec![
            ("ASAN_OPTIONS".into(), asan),
            ("UBSAN_OPTIONS".into(), BASE_UBSAN_OPTIONS.into()),
        ],
        limits: ExecLimits::with_wall_time(limit),
        ..ExecRequest::default()
    };
    let result = sandbox.run(&artifact, &request)?;
    if result.timed_out {
        return Err(MemoryError::Timeout {
            test: test.id.clone(),
            limit,
        });
    }
    Ok(findings_from_run(
        &challenge.manifest,
        test,
        &result,
        &staged.file_names(),
        has_destructor,
    ))
}

fn functional_finding(test_id: &str, evidence: String) -> Finding {
    Finding {
        guideline: FUNCTIONAL_GUIDELINE.to_string(),
        channel: Channel::FunctionalTest,
        evidence,
        location: None,
        severity: Severity::High,
        source: Some(test_id.to_string()),
    }
}

/// Turns a driver that no longer builds into a functional finding: the
/// submission broke the interface the harness relies on.
pub fn interface_finding(test_id: &str, err: &SandboxError) -> Finding {
    let detail = match err.first_error() {
        Some(d) if d.line > 0 => format!("{}:{}: {}", d.file, d.line, d.message),
        Some(d) => d.message.clone(),
        None => err.to_string(),
    };
    functional_finding(test_id, format!("{test_id} does not build against the submission: {detail}"))
}

/// Runs every functional test of the challenge under the plain profile.
/// Returns one finding per failing test.
pub fn run_functional_tests(sandbox: &Sandbox, challenge: &Challenge, staged: &StagedSources) -> Result<Vec<Finding>, SandboxError> {
    let mut findings = Vec::new();
    for id in &challenge.manifest.functional_tests {
        let mut sources = staged.files().to_vec();
        sources.push(challenge.path(&functional_test_path(id)));
        sources.extend(harness_headers(challenge));
        let artifact = match sandbox.compile(&sources, &BuildProfile::plain()) {
            Ok(a) => a,
            Err(e @ SandboxError::CompileError { .. }) | Err(e @ SandboxError::DuplicateSource(_)) => {
                findings.push(interface_finding(id, &e));
                continue;
            }
            Err(e) => return Err(e),
        };
        let result = sandbox.run(&artifact, &ExecRequest::default())?;
        let stdout = result.stdout_text();
        let marker = stdout
            .lines()
            .find_map(|l| l.split_once(FUNCTIONAL_FAIL_MARKER).map(|(_, m)| m.trim().to_string()));
        let failure = if result.timed_out {
            Some(format!("functional test {id} did not finish in time"))
        } else if let Some(m) = marker {
            Some(format!("functional test {id}: {m}"))
        } else if !result.exit_status.success() {
            Some(format!("functional test {id} failed ({})", result.exit_status))
        } else {
            None
        };
        if let Some(evidence) = failure {
            findings.push(functional_finding(id, evidence));
        }
    }
    Ok(findings)
}

/// Runs all security tests of the manifest (concurrently, bounded by the
/// sandbox job slots) and merges their findings. Drivers that no longer
/// build are reported as functional findings.
pub fn assess_security_tests(sandbox: &Sandbox, challenge: &Challenge, staged: &StagedSources) -> Result<Vec<Finding>, MemoryError> {
    let source = staged.read_all().map_err(|e| MemoryError::Sandbox(SandboxError::SandboxSetupError(e)))?;
    let has_destructor = declares_destructor(&source);
    let results: Vec<Result<Vec<Finding>, MemoryError>> = thread::scope(|scope| {
        let handles: Vec<_> = challenge
            .manifest
            .security_tests
            .iter()
            .map(|test| scope.spawn(move || run_security_test_with(sandbox, challenge, staged, test, has_destructor)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("security test thread")).collect()
    });
    let mut findings = Vec::new();
    for result in results {
        match result {
            Ok(f) => findings.extend(f),
            Err(MemoryError::CompileError { test, source }) => findings.push(interface_finding(&test, &source)),
            Err(e) => return Err(e),
        }
    }
    Ok(merge_findings(findings))
}

/// Functional tests followed by the security-test suite. The result is
/// de-duplicated on (guideline, location) and sorted.
pub fn assess_memory(sandbox: &Sandbox, challenge: &Challenge, staged: &StagedSources) -> Result<Vec<Finding>, MemoryError> {
    let mut findings = run_functional_tests(sandbox, challenge, staged)?;
    findings.extend(assess_security_tests(sandbox, challenge, staged)?);
    Ok(merge_findings(findings))
}
