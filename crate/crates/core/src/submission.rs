//! Player submissions as a set of named source files.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempfile::TempDir;

use crate::registry::Challenge;

/// Submitted source files keyed by file name (no directories).
///
/// Files not present in a submission fall back to the challenge skeleton
/// when the submission is staged for a build.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubmissionFiles(BTreeMap<String, String>);

impl SubmissionFiles {
    pub fn single(name: impl Into<String>, contents: impl Into<String>) -> Self {
        let mut files = Self::default();
        files.0.insert(name.into(), contents.into());
        files
    }

    pub fn insert(&mut self, name: String, bytes: Vec<u8>) {
        self.0.insert(name, String::from_utf8_lossy(&bytes).into_owned());
    }

    pub fn insert_text(&mut self, name: impl Into<String>, text: impl Into<String>) {
        self.0.insert(name.into(), text.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_size(&self) -> usize {
        self.0.values().map(String::len).sum()
    }

    /// Rejects names that are empty or would escape the staging directory.
    pub fn validate_names(&self) -> Result<(), String> {
        for name in self.0.keys() {
            let ok = !name.is_empty()
                && name != "."
                && name != ".."
                && !name.contains('/')
                && !name.contains('\\')
                && !name.contains('\0');
            if !ok {
                return Err(format!("invalid file name {name:?}"));
            }
        }
        Ok(())
    }
}

/// A submission written to disk on top of the challenge skeleton.
#[derive(Debug)]
pub struct StagedSources {
    dir: TempDir,
    files: Vec<PathBuf>,
}

impl StagedSources {
    /// Every staged file (sources and headers).
    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn dir(&self) -> &Path {
        self.dir.path()
    }

    /// File names of the staged submission, used to tell submission frames
    /// from harness frames in runtime reports.
    pub fn file_names(&self) -> Vec<String> {
        self.files
            .iter()
            .filter_map(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .collect()
    }

    /// Concatenated text of the staged files.
    pub fn read_all(&self) -> io::Result<String> {
        let mut all = String::new();
        for f in &self.files {
            all.push_str(&fs::read_to_string(f)?);
            all.push('\n');
        }
        Ok(all)
    }
}

/// Writes the skeleton overlaid with `files` into a fresh directory.
pub fn stage(challenge: &Challenge, files: &SubmissionFiles) -> io::Result<StagedSources> {
    files
        .validate_names()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let dir = tempfile::Builder::new().prefix("dojo-submission-").tempdir()?;
    let mut staged = BTreeMap::new();
    for rel in &challenge.manifest.skeleton_files {
        let src = challenge.path(rel);
        let name = src
            .file_name()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, format!("bad skeleton path {rel}")))?
            .to_string_lossy()
            .into_owned();
        let dest = dir.path().join(&name);
        fs::copy(&src, &dest)?;
        staged.insert(name, dest);
    }
    for (name, text) in files.iter() {
        let dest = dir.path().join(name);
        fs::write(&dest, text)?;
        staged.insert(name.to_string(), dest);
    }
    Ok(StagedSources {
        dir,
        files: staged.into_values().collect(),
    })
}
