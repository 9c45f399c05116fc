//! Challenge corpus: loading, validation and lookup.
//!
//! A corpus is a directory with one sub-directory per challenge:
//!
//! ```text
//! <root>/<challenge-id>/manifest.toml
//!                      /hints.toml              hint ladders
//!                      /src/                    skeleton shown to the player
//!                      /harness/                wrappers and security tests
//!                      /harness/functional/     functional test drivers
//!                      /reference/vulnerable/   known-bad solution
//!                      /reference/secure/       known-good solution
//! ```
//!
//! The loaded [`Corpus`] is immutable and can be shared between threads.

mod guideline;
mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::coach::HintBook;
use crate::submission::SubmissionFiles;

pub use guideline::{priority_order, GuidelineRef, Likelihood, LineHint, Severity, Standard};
pub use manifest::{
    finding_vocabulary, functional_test_path, validate_manifest, AssessorKind, ChallengeManifest,
    ExpectedSignal, SecurityTest, ValidationReport, Violation, ViolationKind,
};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const HINTS_FILE: &str = "hints.toml";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("corpus not found at {0}")]
    CorpusNotFound(PathBuf),
    #[error("{file}:{line}: {message}")]
    ManifestParse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{manifest} references missing file {path}")]
    DanglingReference { manifest: PathBuf, path: String },
    #[error("challenge id {0:?} is defined more than once")]
    DuplicateId(String),
    #[error("unknown challenge {0:?}")]
    UnknownChallenge(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RegistryError + '_ {
    move |source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which solution of a reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReferenceKind {
    Vulnerable,
    Secure,
}

impl ReferenceKind {
    pub fn dir_name(self) -> &'static str {
        match self {
            ReferenceKind::Vulnerable => "vulnerable",
            ReferenceKind::Secure => "secure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Challenge {
    pub manifest: ChallengeManifest,
    pub dir: PathBuf,
    /// Hint ladders from `hints.toml`, when present.
    pub hints: Option<HintBook>,
}

impl Challenge {
    pub fn path(&self, relative: &str) -> PathBuf {
        self.dir.join(relative)
    }

    /// The skeleton files as a player sees them.
    pub fn skeleton(&self) -> Result<SubmissionFiles, RegistryError> {
        let mut files = SubmissionFiles::default();
        for rel in &self.manifest.skeleton_files {
            let path = self.path(rel);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            files.insert(file_name(rel), bytes);
        }
        Ok(files)
    }

    /// The files of one reference solution. Every file in the reference
    /// directory is included, keyed by its file name.
    pub fn reference(&self, kind: ReferenceKind) -> Result<SubmissionFiles, RegistryError> {
        let dir = self.dir.join("reference").join(kind.dir_name());
        let mut files = SubmissionFiles::default();
        let entries = fs::read_dir(&dir).map_err(io_err(&dir))?;
        for entry in entries {
            let entry = entry.map_err(io_err(&dir))?;
            let path = entry.path();
            if path.is_file() {
                let bytes = fs::read(&path).map_err(io_err(&path))?;
                files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
            }
        }
        Ok(files)
    }
}

fn file_name(rel: &str) -> String {
    Path::new(rel)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| rel.to_string())
}

/// A loaded corpus. Challenges are ordered by id.
#[derive(Debug, Clone)]
pub struct Corpus {
    root: PathBuf,
    challenges: Vec<Challenge>,
}

impl Corpus {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn challenges(&self) -> &[Challenge] {
        &self.challenges
    }

    pub fn manifests(&self) -> impl Iterator<Item = &ChallengeManifest> {
        self.challenges.iter().map(|c| &c.manifest)
    }

    pub fn get(&self, id: &str) -> Result<&Challenge, RegistryError> {
        self.challenges
            .binary_search_by(|c| c.manifest.id.as_str().cmp(id))
            .map(|i| &self.challenges[i])
            .map_err(|_| RegistryError::UnknownChallenge(id.to_string()))
    }
}

/// Returns the manifest with the given id.
pub fn get_challenge<'a>(corpus: &'a Corpus, id: &str) -> Result<&'a ChallengeManifest, RegistryError> {
    corpus.get(id).map(|c| &c.manifest)
}

/// Loads every `<root>/<dir>/manifest.toml`. Directories without a manifest
/// are skipped.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<Corpus, RegistryError> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(RegistryError::CorpusNotFound(root.to_path_buf()));
    }
    let mut challenges = Vec::new();
    let entries = fs::read_dir(root).map_err(io_err(root))?;
    for entry in entries {
        let entry = entry.map_err(io_err(root))?;
        let dir = entry.path();
        let manifest_path = dir.join(MANIFEST_FILE);
        if !dir.is_dir() || !manifest_path.is_file() {
            continue;
        }
        let manifest = read_manifest(&manifest_path)?;
        for rel in manifest.referenced_files() {
            if !dir.join(&rel).is_file() {
                return Err(RegistryError::DanglingReference {
                    manifest: manifest_path,
                    path: rel,
                });
            }
        }
        let hints_path = dir.join(HINTS_FILE);
        let hints = if hints_path.is_file() {
            Some(read_hints(&hints_path)?)
        } else {
            None
        };
        challenges.push(Challenge { manifest, dir, hints });
    }
    challenges.sort_by(|a, b| a.manifest.id.cmp(&b.manifest.id));
    for pair in challenges.windows(2) {
        if pair[0].manifest.id == pair[1].manifest.id {
            return Err(RegistryError::DuplicateId(pair[0].manifest.id.clone()));
        }
    }
    Ok(Corpus {
        root: root.to_path_buf(),
        challenges,
    })
}

/// Parses one manifest file.
pub fn read_manifest(path: &Path) -> Result<ChallengeManifest, RegistryError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_toml(path, &text)
}

fn read_hints(path: &Path) -> Result<HintBook, RegistryError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_toml(path, &text)
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, RegistryError> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(1);
        RegistryError::ManifestParse {
            file: path.to_path_buf(),
            line,
            message: e.message().to_string(),
        }
    })
}

/// Parses a manifest from text; `origin` is used in error messages only.
pub fn parse_manifest(origin: &Path, text: &str) -> Result<ChallengeManifest, RegistryError> {
    parse_toml(origin, text)
}

/// Ladder coverage per challenge: guideline ids without a ladder.
pub fn missing_ladders(challenge: &Challenge) -> Vec<String> {
    let ladders: BTreeMap<&str, ()> = challenge
        .hints
        .iter()
        .filter(|book| book.id == challenge.manifest.hint_ladder_id)
        .flat_map(|book| book.ladders.iter().map(|l| (l.guideline.as_str(), ())))
        .collect();
    challenge
        .manifest
        .guidelines
        .iter()
        .filter(|g| !ladders.contains_key(g.rule_id.as_str()))
        .map(|g| g.rule_id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"
id = "demo"
title = "Demo"
skeleton_files = ["src/a.cpp"]
assessors = ["tsc"]
hint_ladder_id = "demo"

[[guidelines]]
standard = "CWE"
rule_id = "CWE-208"
severity = "High"
likelihood = "Likely"
description = "Observable Timing Discrepancy"
line_hints = ["7-12"]
"#
    }

    fn write_challenge(root: &Path, dir: &str, manifest: &str, files: &[&str]) {
        let d = root.join(dir);
        fs::create_dir_all(&d).unwrap();
        fs::write(d.join(MANIFEST_FILE), manifest).unwrap();
        for f in files {
            let p = d.join(f);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, "// x\n").unwrap();
        }
    }

    #[test]
    fn empty_directory_gives_empty_corpus() {
        let tmp = tempfile::tempdir().unwrap();
        let corpus = load_corpus(tmp.path()).unwrap();
        assert!(corpus.challenges().is_empty());
    }

    #[test]
    fn missing_root_is_reported() {
        let err = load_corpus("/definitely/not/here").unwrap_err();
        assert!(matches!(err, RegistryError::CorpusNotFound(_)));
    }

    #[test]
    fn dangling_reference_names_the_path() {
        let tmp = tempfile::tempdir().unwrap();
        let text = minimal().replace(
            "skeleton_files = [\"src/a.cpp\"]",
            "skeleton_files = [\"src/a.cpp\"]\nwrapper_files = [\"harness/wrapper.cpp\"]",
        );
        write_challenge(tmp.path(), "demo", &text, &["src/a.cpp"]);
        match load_corpus(tmp.path()).unwrap_err() {
            RegistryError::DanglingReference { path, .. } => assert_eq!(path, "harness/wrapper.cpp"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_carries_file_and_line() {
        let tmp = tempfile::tempdir().unwrap();
        let text = minimal().replace("severity = \"High\"", "severity = \"Enormous\"");
        write_challenge(tmp.path(), "demo", &text, &["src/a.cpp"]);
        match load_corpus(tmp.path()).unwrap_err() {
            RegistryError::ManifestParse { file, line, .. } => {
                assert!(file.ends_with("demo/manifest.toml"));
                let expected = text.lines().position(|l| l.contains("Enormous")).unwrap() + 1;
                assert_eq!(line, expected);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ids_are_sorted_and_unique() {
        let tmp = tempfile::tempdir().unwrap();
        for id in ["zeta", "alpha", "mid"] {
            let text = minimal().replace("id = \"demo\"", &format!("id = \"{id}\""));
            write_challenge(tmp.path(), id, &text, &["src/a.cpp"]);
        }
        let corpus = load_corpus(tmp.path()).unwrap();
        let ids: Vec<_> = corpus.manifests().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["alpha", "mid", "zeta"]);
        assert!(matches!(corpus.get("nope"), Err(RegistryError::UnknownChallenge(_))));

        let dup = minimal().replace("id = \"demo\"", "id = \"mid\"");
        write_challenge(tmp.path(), "other", &dup, &["src/a.cpp"]);
        assert!(matches!(load_corpus(tmp.path()), Err(RegistryError::DuplicateId(id)) if id == "mid"));
    }

    #[test]
    fn validation_flags_grammar_and_empty_assessors() {
        let mut m: ChallengeManifest = toml::from_str(minimal()).unwrap();
        assert!(validate_manifest(&m).is_ok(), "{:?}", validate_manifest(&m));

        m.guidelines[0].rule_id = "CWE367".into();
        let report = validate_manifest(&m);
        assert!(report.has(ViolationKind::IdentifierGrammar));
        assert!(report.violations.iter().any(|v| v.to_string().contains("identifier grammar")));

        let mut m: ChallengeManifest = toml::from_str(minimal()).unwrap();
        m.assessors.clear();
        let report = validate_manifest(&m);
        assert!(report.has(ViolationKind::AssessorsNonEmpty));
        assert!(report.violations.iter().any(|v| v.to_string().contains("assessors non-empty")));
    }

    #[test]
    fn validation_checks_config_keys() {
        let mut m: ChallengeManifest = toml::from_str(minimal()).unwrap();
        m.assessor_config.insert("tsc.seed".into(), "3".into());
        assert!(validate_manifest(&m).is_ok());
        m.assessor_config.insert("race.max_iterations".into(), "10".into());
        assert!(validate_manifest(&m).has(ViolationKind::UnknownConfigKey));
        m.assessor_config.remove("race.max_iterations");
        m.assessor_config.insert("tsc.threshold".into(), "-1".into());
        assert!(validate_manifest(&m).has(ViolationKind::InvalidConfigValue));
    }

    #[test]
    fn guideline_must_be_reachable() {
        let mut m: ChallengeManifest = toml::from_str(minimal()).unwrap();
        m.guidelines[0].rule_id = "CWE-367".into();
        assert!(validate_manifest(&m).has(ViolationKind::UnreachableGuideline));
        m.assessors.insert(AssessorKind::Race);
        assert!(validate_manifest(&m).is_ok());
    }
}
