//! Secure-coding guideline references carried by challenge manifests.

use std::cmp::Ordering;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static SEI_CERT_ID: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Z]{3}[0-9]{2}-(C|CPP)$").unwrap());
static CWE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CWE-[0-9]+$").unwrap());

/// Catalogue a rule id belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Standard {
    #[serde(rename = "SEI-CERT")]
    SeiCert,
    #[serde(rename = "CWE")]
    Cwe,
}

impl Standard {
    /// Whether `rule_id` follows this catalogue's identifier grammar.
    pub fn accepts(self, rule_id: &str) -> bool {
        match self {
            Standard::SeiCert => SEI_CERT_ID.is_match(rule_id),
            Standard::Cwe => CWE_ID.is_match(rule_id),
        }
    }
}

impl fmt::Display for Standard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Standard::SeiCert => "SEI-CERT",
            Standard::Cwe => "CWE",
        })
    }
}

/// Ordered Low < Medium < High.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Low,
    Medium,
    High,
}

/// Ordered Unlikely < Probable < Likely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Likelihood {
    Unlikely,
    Probable,
    Likely,
}

/// Where in the reference source a guideline is violated.
///
/// Manifests write these as integers (`33`), ranges (`"7-12"`) or the
/// sentinel `"no-destructor"` for violations that are an absence of code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawLineHint", into = "RawLineHint")]
pub enum LineHint {
    Line(u32),
    Range(u32, u32),
    NoDestructor,
}

impl LineHint {
    pub const NO_DESTRUCTOR: &'static str = "no-destructor";

    pub fn contains(&self, line: u32) -> bool {
        match *self {
            LineHint::Line(l) => l == line,
            LineHint::Range(lo, hi) => (lo..=hi).contains(&line),
            LineHint::NoDestructor => false,
        }
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self, LineHint::NoDestructor)
    }
}

impl fmt::Display for LineHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LineHint::Line(l) => write!(f, "{l}"),
            LineHint::Range(lo, hi) => write!(f, "{lo}-{hi}"),
            LineHint::NoDestructor => f.write_str(Self::NO_DESTRUCTOR),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawLineHint {
    Number(u32),
    Text(String),
}

impl TryFrom<RawLineHint> for LineHint {
    type Error = String;

    fn try_from(raw: RawLineHint) -> Result<Self, Self::Error> {
        let text = match raw {
            RawLineHint::Number(n) => return Ok(LineHint::Line(n)),
            RawLineHint::Text(t) => t,
        };
        let text = text.trim();
        if text == Self::NO_DESTRUCTOR {
            return Ok(LineHint::NoDestructor);
        }
        if let Some((lo, hi)) = text.split_once('-') {
            let lo: u32 = lo.trim().parse().map_err(|_| format!("bad line range {text:?}"))?;
            let hi: u32 = hi.trim().parse().map_err(|_| format!("bad line range {text:?}"))?;
            if lo > hi {
                return Err(format!("line range {text:?} is reversed"));
            }
            return Ok(LineHint::Range(lo, hi));
        }
        text.parse()
            .map(LineHint::Line)
            .map_err(|_| format!("bad line hint {text:?}"))
    }
}

impl From<LineHint> for RawLineHint {
    fn from(hint: LineHint) -> Self {
        match hint {
            LineHint::Line(l) => RawLineHint::Number(l),
            other => RawLineHint::Text(other.to_string()),
        }
    }
}

/// One row of a challenge's guideline table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineRef {
    pub standard: Standard,
    pub rule_id: String,
    pub severity: Severity,
    pub likelihood: Likelihood,
    pub description: String,
    #[serde(default)]
    pub line_hints: Vec<LineHint>,
}

impl GuidelineRef {
    pub fn has_valid_id(&self) -> bool {
        !self.rule_id.is_empty() && self.standard.accepts(&self.rule_id)
    }

    pub fn has_numeric_hints(&self) -> bool {
        self.line_hints.iter().any(LineHint::is_numeric)
    }

    pub fn hints_line(&self, line: u32) -> bool {
        self.line_hints.iter().any(|h| h.contains(line))
    }

    /// Risk ordering used for prioritising findings: severity first, then
    /// likelihood. Higher is more urgent.
    pub fn risk(&self) -> (Severity, Likelihood) {
        (self.severity, self.likelihood)
    }
}

/// Compare two guidelines by urgency: higher risk first, ties broken by
/// lexicographic rule id.
pub fn priority_order(a: &GuidelineRef, b: &GuidelineRef) -> Ordering {
    b.risk().cmp(&a.risk()).then_with(|| a.rule_id.cmp(&b.rule_id))
}
