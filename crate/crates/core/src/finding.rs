use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::registry::Severity;

/// Pseudo-guideline id under which functional-test failures are reported.
/// It sorts ahead of every real guideline in the coach because broken code
/// has to work before it can be secure.
pub const FUNCTIONAL_GUIDELINE: &str = "FUNCTIONAL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Instrumentation,
    SecurityTest,
    FunctionalTest,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

/// One detected violation of one guideline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub guideline: String,
    pub channel: Channel,
    pub evidence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
    pub severity: Severity,
    /// The test or measurement that produced the finding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Finding {
    pub fn is_functional(&self) -> bool {
        self.channel == Channel::FunctionalTest
    }

    /// Merge order: guideline, then location (absent first), then source.
    pub fn merge_order(a: &Finding, b: &Finding) -> Ordering {
        a.guideline
            .cmp(&b.guideline)
            .then_with(|| a.location.cmp(&b.location))
            .then_with(|| a.source.cmp(&b.source))
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.guideline)?;
        if let Some(loc) = &self.location {
            write!(f, " at {loc}")?;
        }
        write!(f, ": {}", self.evidence)
    }
}

/// Sorts findings deterministically and keeps the first finding of every
/// (guideline, location) pair.
pub fn merge_findings(mut findings: Vec<Finding>) -> Vec<Finding> {
    findings.sort_by(Finding::merge_order);
    findings.dedup_by(|later, first| later.guideline == first.guideline && later.location == first.location);
    findings
}
