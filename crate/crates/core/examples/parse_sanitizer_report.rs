//! Splits a sanitizer log into report blocks and classifies each one.
//!
//!     cargo run --example parse_sanitizer_report -- [LOG...]
//!
//! Without arguments, the bundled gcc 11.4 fixtures are parsed.

use std::fs;
use std::path::PathBuf;

use code_dojo::memory::{guidelines_for, parse_runtime_report, ParsedReport};
use code_dojo::sandbox::segment_reports;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut paths: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if paths.is_empty() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/memory/gcc-11.4");
        paths = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        paths.sort();
    }
    for path in paths {
        let log = fs::read_to_string(&path)?;
        println!("{}", path.display());
        for block in segment_reports(&log) {
            match parse_runtime_report(&block) {
                ParsedReport::Fragment(f) => {
                    let at = match (&f.file, f.line) {
                        (Some(file), Some(line)) => format!("{file}:{line}"),
                        _ => "-".into(),
                    };
                    println!(
                        "  {:<24} {:<14} {:?}\n      {}",
                        f.category.as_str(),
                        at,
                        guidelines_for(f.category, false),
                        f.summary
                    );
                }
                ParsedReport::Unrecognized => println!("  (unrecognized block)"),
            }
        }
    }
    Ok(())
}
