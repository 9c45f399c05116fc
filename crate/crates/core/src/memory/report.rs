//! Parsing of sanitizer report blocks.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportCategory {
    HeapUseAfterFree,
    DoubleFree,
    HeapBufferOverflow,
    StackBufferOverflow,
    MemoryLeak,
    UninitializedRead,
    UndefinedBehavior,
    /// `new[]` released with `delete` (or similar form mismatches).
    AllocDeallocMismatch,
    Other,
}

impl ReportCategory {
    pub const ALL: [ReportCategory; 9] = [
        ReportCategory::HeapUseAfterFree,
        ReportCategory::DoubleFree,
        ReportCategory::HeapBufferOverflow,
        ReportCategory::StackBufferOverflow,
        ReportCategory::MemoryLeak,
        ReportCategory::UninitializedRead,
        ReportCategory::UndefinedBehavior,
        ReportCategory::AllocDeallocMismatch,
        ReportCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportCategory::HeapUseAfterFree => "heap-use-after-free",
            ReportCategory::DoubleFree => "double-free",
            ReportCategory::HeapBufferOverflow => "heap-buffer-overflow",
            ReportCategory::StackBufferOverflow => "stack-buffer-overflow",
            ReportCategory::MemoryLeak => "memory-leak",
            ReportCategory::UninitializedRead => "uninitialized-read",
            ReportCategory::UndefinedBehavior => "undefined-behavior",
            ReportCategory::AllocDeallocMismatch => "alloc-dealloc-mismatch",
            ReportCategory::Other => "other",
        }
    }
}

impl fmt::Display for ReportCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What one report block says, with paths reduced to file names and
/// addresses and process ids removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFragment {
    pub category: ReportCategory,
    pub file: Option<String>,
    pub line: Option<u32>,
    /// Normalized headline of the report.
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedReport {
    Fragment(ReportFragment),
    Unrecognized,
}

static PID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"==\d+==").unwrap());
static ADDR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"0x[0-9a-fA-F]+").unwrap());
static ABS_PATH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:/[^/\s:]+)+/([^/\s:]+)").unwrap());
static UB_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?P<file>[^:\s]+):(?P<line>\d+):(?:\d+:)? runtime error: (?P<msg>.*)$").unwrap());
static FRAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*#\d+ 0x[0-9a-fA-F]+ in .*? (?P<path>\S+?):(?P<line>\d+)(?::\d+)?\s*$").unwrap());

/// Paths that belong to the toolchain rather than to the program.
fn is_system_path(path: &str) -> bool {
    path.starts_with("/usr/")
        || path.starts_with("/lib")
        || path.contains("libsanitizer")
        || path.contains("/sysdeps/")
        || path.contains("/csu/")
        || path.starts_with("../")
}

fn base_name(path: &str) -> String {
    path.rsplit('/').next().unwrap_or(path).to_string()
}

/// Removes process ids, addresses and directory prefixes.
pub fn normalize_evidence(text: &str) -> String {
    let text = PID.replace_all(text, "");
    let text = ADDR.replace_all(&text, "<addr>");
    let text = ABS_PATH.replace_all(&text, "$1");
    text.trim().to_string()
}

fn classify(block: &str) -> Option<ReportCategory> {
    let headline = block
        .lines()
        .find(|l| l.contains("ERROR: ") || l.contains("runtime error: ") || l.contains("WARNING: "))?;
    let category = if headline.contains("runtime error: ") {
        ReportCategory::UndefinedBehavior
    } else if headline.contains("LeakSanitizer") {
        ReportCategory::MemoryLeak
    } else if headline.contains("double-free") {
        ReportCategory::DoubleFree
    } else if headline.contains("heap-use-after-free") {
        ReportCategory::HeapUseAfterFree
    } else if headline.contains("heap-buffer-overflow") {
        ReportCategory::HeapBufferOverflow
    } else if headline.contains("stack-buffer-overflow") {
        ReportCategory::StackBufferOverflow
    } else if headline.contains("alloc-dealloc-mismatch") {
        ReportCategory::AllocDeallocMismatch
    } else if headline.contains("use-of-uninitialized-value") {
        ReportCategory::UninitializedRead
    } else {
        ReportCategory::Other
    };
    Some(category)
}

fn headline(block: &str) -> String {
    let line = block
        .lines()
        .find(|l| l.contains("ERROR: ") || l.contains("runtime error: ") || l.contains("WARNING: "))
        .unwrap_or("");
    let line = line.split_once("ERROR: ").map(|(_, rest)| rest).unwrap_or(line);
    normalize_evidence(line)
}

/// Classifies one segmented report block and finds the first stack frame
/// outside the toolchain. Undefined-behavior lines carry their location in
/// the line itself.
pub fn parse_runtime_report(raw: &str) -> ParsedReport {
    let raw = raw.trim();
    let Some(category) = classify(raw) else {
        return ParsedReport::Unrecognized;
    };
    let summary = headline(raw);
    let (file, line) = if category == ReportCategory::UndefinedBehavior {
        raw.lines()
            .find_map(|l| UB_LINE.captures(l.trim()))
            .map(|c| (Some(base_name(&c["file"])), c["line"].parse().ok()))
            .unwrap_or((None, None))
    } else {
        raw.lines()
            .filter_map(|l| FRAME.captures(l))
            .find(|c| !is_system_path(&c["path"]))
            .map(|c| (Some(base_name(&c["path"])), c["line"].parse().ok()))
            .unwrap_or((None, None))
    };
    ParsedReport::Fragment(ReportFragment {
        category,
        file,
        line,
        summary,
    })
}
