//! Splits sanitizer output on stderr into one block per report.

use std::sync::LazyLock;

use regex::Regex;

static ERROR_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^==\d+==ERROR: [A-Za-z]+Sanitizer").unwrap());
static ABORTING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^==\d+==ABORTING").unwrap());
static UBSAN_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r": runtime error: ").unwrap());

fn is_separator(line: &str) -> bool {
    line.len() >= 20 && line.bytes().all(|b| b == b'=')
}

/// Segments raw stderr into report blocks.
///
/// Address/leak reports open with a `=====` separator (or an `==PID==ERROR`
/// header) and close at `==PID==ABORTING`; leak reports close at their
/// `SUMMARY:` line. Each undefined-behavior `runtime error:` line is a block
/// of its own. Everything else is program output and is dropped.
pub fn segment_reports(stderr: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    let mut current_is_leak = false;

    for line in stderr.lines() {
        if let Some(block) = current.as_mut() {
            if is_separator(line) {
                blocks.push(block.join("\n"));
                current = Some(vec![line]);
                current_is_leak = false;
                continue;
            }
            if ERROR_HEADER.is_match(line) && block.iter().any(|l| ERROR_HEADER.is_match(l)) {
                blocks.push(block.join("\n"));
                current_is_leak = line.contains("LeakSanitizer");
                current = Some(vec![line]);
                continue;
            }
            block.push(line);
            if line.contains("LeakSanitizer") && ERROR_HEADER.is_match(line) {
                current_is_leak = true;
            }
            let closes = ABORTING.is_match(line) || (current_is_leak && line.starts_with("SUMMARY: "));
            if closes {
                blocks.push(block.join("\n"));
                current = None;
                current_is_leak = false;
            }
            continue;
        }

        if is_separator(line) || ERROR_HEADER.is_match(line) {
            current_is_leak = line.contains("LeakSanitizer");
            current = Some(vec![line]);
        } else if UBSAN_LINE.is_match(line) {
            blocks.push(line.to_string());
        }
    }
    if let Some(block) = current {
        if block.iter().any(|l| !is_separator(l)) {
            blocks.push(block.join("\n"));
        }
    }
    blocks
}
