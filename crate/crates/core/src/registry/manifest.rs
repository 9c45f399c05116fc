use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::guideline::GuidelineRef;

/// The three assessment methods a challenge can ask for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssessorKind {
    Tsc,
    Memory,
    Race,
}

impl AssessorKind {
    pub const ALL: [AssessorKind; 3] = [AssessorKind::Tsc, AssessorKind::Memory, AssessorKind::Race];

    pub fn as_str(self) -> &'static str {
        match self {
            AssessorKind::Tsc => "tsc",
            AssessorKind::Memory => "memory",
            AssessorKind::Race => "race",
        }
    }

    /// `assessor_config` keys understood by this assessor, without the
    /// `<assessor>.` prefix.
    pub fn config_keys(self) -> &'static [&'static str] {
        match self {
            AssessorKind::Tsc => &[
                "function",
                "input_size",
                "seed",
                "threshold",
                "granularity",
                "step_ceiling",
            ],
            AssessorKind::Memory => &["timeout_s"],
            AssessorKind::Race => &["max_iterations", "timeout_s", "attacker_pause_us"],
        }
    }
}

impl fmt::Display for AssessorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssessorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsc" => Ok(AssessorKind::Tsc),
            "memory" => Ok(AssessorKind::Memory),
            "race" => Ok(AssessorKind::Race),
            other => Err(format!("unknown assessor {other:?}")),
        }
    }
}

/// How a vulnerable submission is expected to give itself away when a
/// security test runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectedSignal {
    RuntimeReport,
    NonzeroExit,
    AssertionFailure,
}

/// A driver program that exercises one corner case of the challenge class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityTest {
    pub id: String,
    pub target_guidelines: Vec<String>,
    pub driver_source: String,
    pub expected_signal: ExpectedSignal,
    #[serde(default)]
    pub description: String,
    /// Extra `ASAN_OPTIONS` entries for this driver, e.g.
    /// `alloc_dealloc_mismatch=0` to let a later defect surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sanitizer_options: Option<String>,
}

/// One exercise of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeManifest {
    pub id: String,
    pub title: String,
    pub skeleton_files: Vec<String>,
    #[serde(default)]
    pub wrapper_files: Vec<String>,
    #[serde(default)]
    pub functional_tests: Vec<String>,
    pub assessors: BTreeSet<AssessorKind>,
    pub hint_ladder_id: String,
    #[serde(default)]
    pub assessor_config: BTreeMap<String, String>,
    #[serde(default)]
    pub guidelines: Vec<GuidelineRef>,
    #[serde(default)]
    pub security_tests: Vec<SecurityTest>,
}

/// Relative path of the driver for functional test `id`.
pub fn functional_test_path(id: &str) -> String {
    format!("harness/functional/{id}.cpp")
}

impl ChallengeManifest {
    pub fn guideline(&self, rule_id: &str) -> Option<&GuidelineRef> {
        self.guidelines.iter().find(|g| g.rule_id == rule_id)
    }

    /// Looks up `<assessor>.<key>` in the assessor configuration.
    pub fn config(&self, assessor: AssessorKind, key: &str) -> Option<&str> {
        self.assessor_config
            .get(&format!("{}.{}", assessor.as_str(), key))
            .map(String::as_str)
    }

    /// Every file path the manifest refers to, relative to its challenge
    /// directory.
    pub fn referenced_files(&self) -> Vec<String> {
        let mut files: Vec<String> = self
            .skeleton_files
            .iter()
            .chain(&self.wrapper_files)
            .cloned()
            .collect();
        files.extend(self.functional_tests.iter().map(|t| functional_test_path(t)));
        files.extend(self.security_tests.iter().map(|t| t.driver_source.clone()));
        files
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Guideline ids that a given assessor is able to report for `manifest`.
pub fn finding_vocabulary(manifest: &ChallengeManifest, assessor: AssessorKind) -> BTreeSet<String> {
    match assessor {
        AssessorKind::Tsc => [crate::tsc::TSC_GUIDELINE.to_string()].into(),
        AssessorKind::Race => [crate::race::RACE_GUIDELINE.to_string()].into(),
        AssessorKind::Memory => {
            let mut ids: BTreeSet<String> = crate::memory::mapped_guidelines()
                .into_iter()
                .map(str::to_string)
                .collect();
            for test in &manifest.security_tests {
                ids.extend(test.target_guidelines.iter().cloned());
            }
            ids
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    EmptyId,
    IdentifierGrammar,
    AssessorsNonEmpty,
    UnreachableGuideline,
    DuplicateGuideline,
    UnknownConfigKey,
    InvalidConfigValue,
    SecurityTestTargets,
    DuplicateSecurityTest,
    SecurityTestsWithoutMemory,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::EmptyId => "empty id",
            ViolationKind::IdentifierGrammar => "identifier grammar",
            ViolationKind::AssessorsNonEmpty => "assessors non-empty",
            ViolationKind::UnreachableGuideline => "guideline unreachable",
            ViolationKind::DuplicateGuideline => "duplicate guideline",
            ViolationKind::UnknownConfigKey => "unknown config key",
            ViolationKind::InvalidConfigValue => "invalid config value",
            ViolationKind::SecurityTestTargets => "security test targets",
            ViolationKind::DuplicateSecurityTest => "duplicate security test",
            ViolationKind::SecurityTestsWithoutMemory => "security tests without memory assessor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.label(), self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            message: message.into(),
        });
    }
}

/// Checks the manifest's own invariants. File existence is a corpus-level
/// property and is checked by [`super::load_corpus`].
pub fn validate_manifest(m: &ChallengeManifest) -> ValidationReport {
    let mut report = ValidationReport::default();

    if m.id.trim().is_empty() {
        report.push(ViolationKind::EmptyId, "challenge id is empty");
    }
    if m.assessors.is_empty() {
        report.push(ViolationKind::AssessorsNonEmpty, "no assessor configured");
    }

    let mut seen = BTreeSet::new();
    for g in &m.guidelines {
        if !g.has_valid_id() {
            report.push(
                ViolationKind::IdentifierGrammar,
                format!("{:?} is not a valid {} identifier", g.rule_id, g.standard),
            );
        }
        if !seen.insert(g.rule_id.as_str()) {
            report.push(ViolationKind::DuplicateGuideline, format!("{} listed twice", g.rule_id));
        }
        let reachable = m
            .assessors
            .iter()
            .any(|a| finding_vocabulary(m, *a).contains(&g.rule_id));
        if !reachable {
            report.push(
                ViolationKind::UnreachableGuideline,
                format!("no configured assessor can report {}", g.rule_id),
            );
        }
    }

    for (key, value) in &m.assessor_config {
        let recognized = key.split_once('.').and_then(|(prefix, name)| {
            let kind: AssessorKind = prefix.parse().ok()?;
            (m.assessors.contains(&kind) && kind.config_keys().contains(&name)).then_some((kind, name))
        });
        match recognized {
            None => report.push(
                ViolationKind::UnknownConfigKey,
                format!("{key:?} is not recognized by the configured assessors"),
            ),
            Some((kind, name)) => {
                if let Err(e) = check_config_value(kind, name, value) {
                    report.push(ViolationKind::InvalidConfigValue, format!("{key} = {value:?}: {e}"));
                }
            }
        }
    }

    if !m.security_tests.is_empty() && !m.assessors.contains(&AssessorKind::Memory) {
        report.push(
            ViolationKind::SecurityTestsWithoutMemory,
            "security tests are only run by the memory assessor",
        );
    }
    let mut test_ids = BTreeSet::new();
    for t in &m.security_tests {
        if !test_ids.insert(t.id.as_str()) {
            report.push(ViolationKind::DuplicateSecurityTest, format!("{} defined twice", t.id));
        }
        if t.target_guidelines.is_empty() {
            report.push(ViolationKind::SecurityTestTargets, format!("{} targets no guideline", t.id));
        }
        for target in &t.target_guidelines {
            if m.guideline(target).is_none() {
                report.push(
                    ViolationKind::SecurityTestTargets,
                    format!("{} targets {target}, which the manifest does not list", t.id),
                );
            }
        }
    }

    report
}

fn check_config_value(kind: AssessorKind, key: &str, value: &str) -> Result<(), String> {
    let positive_int = |v: &str| match v.parse::<u64>() {
        Ok(_) => Ok(()),
        Err(_) => Err("expected a non-negative integer".to_string()),
    };
    match (kind, key) {
        (AssessorKind::Tsc, "function") => {
            if value.trim().is_empty() {
                Err("empty symbol".into())
            } else {
                Ok(())
            }
        }
        (AssessorKind::Tsc, "threshold") => match value.parse::<f64>() {
            Ok(t) if t.is_finite() && t >= 0.0 => Ok(()),
            _ => Err("expected a non-negative fraction".into()),
        },
        (AssessorKind::Tsc, "granularity") => value
            .parse::<crate::tsc::StepGranularity>()
            .map(|_| ())
            .map_err(|e| e.to_string()),
        _ => positive_int(value),
    }
}
