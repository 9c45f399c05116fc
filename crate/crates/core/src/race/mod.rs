//! TOCTOU race assessor.
//!
//! A wrapper calls the submitted `setPerm()` on the victim file over and
//! over while an attacker process keeps swapping the victim with a decoy.
//! If the submission checks one file and changes the mode of another, the
//! decoy's permission bits change and the race is detected.
//!
//! The decoy is a UNIX socket node: it can be renamed and chmod-ed like any
//! file but cannot be opened, so a submission that works on an open
//! descriptor can never reach it, while one that re-resolves the name can.

mod attacker;

use std::fs;
use std::io;
use std::os::unix::fs::{FileTypeExt, PermissionsExt};
use std::os::unix::net::UnixListener;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{AssessorKind, ChallengeManifest};
use crate::sandbox::{BuildArtifact, ExecLimits, ExecRequest, Sandbox, SandboxError};

use attacker::Attacker;

/// Guideline reported when the race is won.
pub const RACE_GUIDELINE: &str = "CWE-367";
pub const DEFAULT_MAX_ITERATIONS: u64 = 10_000;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_ATTACKER_PAUSE: Duration = Duration::from_micros(1);
pub const VICTIM_FILE: &str = "a.txt";
pub const DECOY_FILE: &str = "b.txt";
pub const SWAP_FILE: &str = "swap.tmp";
pub const TARGET_MODE: u32 = 0o777;
pub const VICTIM_MODE: u32 = 0o644;
pub const DECOY_MODE: u32 = 0o600;
/// The attacker must complete at least one swap per this many wrapper
/// iterations, otherwise the run proves nothing.
pub const LIVENESS_RATIO: u64 = 100;

const STOP_FILE: &str = ".attacker-stop";

#[derive(Debug, Error)]
pub enum RaceError {
    #[error("race harness failure: {0}")]
    HarnessError(String),
    #[error("race job exceeded its {0:?} wall-clock cap")]
    Timeout(Duration),
    #[error("invalid race job: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("workspace error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaceJobConfig {
    pub max_iterations: u64,
    /// Directory for the job's files. `None` uses a fresh temporary
    /// directory; a given directory must be empty and exclusive to the job.
    pub workspace: Option<PathBuf>,
    pub victim_file: String,
    pub decoy_file: String,
    pub swap_file: String,
    pub target_mode: u32,
    pub timeout: Duration,
    pub attacker_pause: Duration,
}

impl Default for RaceJobConfig {
    fn default() -> Self {
        RaceJobConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            workspace: None,
            victim_file: VICTIM_FILE.into(),
            decoy_file: DECOY_FILE.into(),
            swap_file: SWAP_FILE.into(),
            target_mode: TARGET_MODE,
            timeout: DEFAULT_TIMEOUT,
            attacker_pause: DEFAULT_ATTACKER_PAUSE,
        }
    }
}

impl RaceJobConfig {
    /// Defaults overridden by the manifest's `race.*` settings.
    pub fn from_manifest(manifest: &ChallengeManifest) -> Self {
        let get = |k| manifest.config(AssessorKind::Race, k).and_then(|v| v.parse::<u64>().ok());
        let mut config = Self::default();
        if let Some(n) = get("max_iterations") {
            config.max_iterations = n;
        }
        if let Some(s) = get("timeout_s") {
            config.timeout = Duration::from_secs(s);
        }
        if let Some(us) = get("attacker_pause_us") {
            config.attacker_pause = Duration::from_micros(us);
        }
        config
    }

    fn check(&self) -> Result<(), RaceError> {
        let names = [&self.victim_file, &self.decoy_file, &self.swap_file];
        if names.iter().any(|n| n.is_empty() || n.contains('/')) {
            return Err(RaceError::InvalidConfig("file names must be plain names".into()));
        }
        if self.victim_file == self.decoy_file || names[2] == names[0] || names[2] == names[1] {
            return Err(RaceError::InvalidConfig("victim, decoy and swap names must differ".into()));
        }
        if self.target_mode & !0o7777 != 0 || self.target_mode == DECOY_MODE {
            return Err(RaceError::InvalidConfig(format!(
                "target mode {:o} must be permission bits distinct from the decoy's",
                self.target_mode
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceVerdict {
    pub detected: bool,
    pub iterations_used: u64,
    /// Which file's permissions changed, in words.
    pub evidence: String,
    /// Swap cycles the attacker completed.
    pub attacker_cycles: u64,
}

/// Removes the job's files (and the directory, if the job created it) on
/// every exit path.
struct Workspace {
    dir: PathBuf,
    owned: Option<tempfile::TempDir>,
    names: Vec<String>,
}

impl Workspace {
    fn prepare(config: &RaceJobConfig) -> Result<Workspace, RaceError> {
        let (dir, owned) = match &config.workspace {
            Some(dir) => {
                if fs::read_dir(dir)?.next().is_some() {
                    return Err(RaceError::InvalidConfig(format!("workspace {} is not empty", dir.display())));
                }
                (dir.clone(), None)
            }
            None => {
                let tmp = tempfile::Builder::new().prefix("dojo-race-").tempdir()?;
                (tmp.path().to_path_buf(), Some(tmp))
            }
        };
        let ws = Workspace {
            dir,
            owned,
            names: vec![
                config.victim_file.clone(),
                config.decoy_file.clone(),
                config.swap_file.clone(),
                STOP_FILE.into(),
            ],
        };
        let victim = ws.path(&config.victim_file);
        fs::write(&victim, "victim\n")?;
        fs::set_permissions(&victim, fs::Permissions::from_mode(VICTIM_MODE))?;
        let decoy = ws.path(&config.decoy_file);
        drop(UnixListener::bind(&decoy)?);
        fs::set_permissions(&decoy, fs::Permissions::from_mode(DECOY_MODE))?;
        Ok(ws)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Name under which the decoy currently lives and its mode.
    fn decoy_state(&self) -> Option<(String, u32)> {
        self.names[..3].iter().find_map(|n| {
            let meta = fs::symlink_metadata(self.path(n)).ok()?;
            meta.file_type()
                .is_socket()
                .then(|| (n.clone(), meta.permissions().mode() & 0o7777))
        })
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        if self.owned.is_none() {
            for n in &self.names {
                let _ = fs::remove_file(self.dir.join(n));
            }
        }
    }
}

/// Parses the wrapper's `iterations=N detected=D observed_swaps=K` line.
fn parse_wrapper_output(stdout: &str) -> Option<(u64, bool)> {
    let line = stdout.lines().rev().find(|l| l.starts_with("iterations="))?;
    let mut iterations = None;
    let mut detected = None;
    for field in line.split_whitespace() {
        match field.split_once('=') {
            Some(("iterations", v)) => iterations = v.parse().ok(),
            Some(("detected", v)) => detected = Some(v == "1"),
            _ => {}
        }
    }
    Some((iterations?, detected?))
}

/// Runs one attack: the wrapper (built from the submission and the race
/// harness) against a freshly prepared workspace while the attacker swaps
/// victim and decoy.
pub fn detect_toctou(sandbox: &Sandbox, artifact: &BuildArtifact, config: &RaceJobConfig) -> Result<RaceVerdict, RaceError> {
    config.check()?;
    if config.max_iterations == 0 {
        return Ok(RaceVerdict {
            detected: false,
            iterations_used: 0,
            evidence: "no attempt made".into(),
            attacker_cycles: 0,
        });
    }
    let started = Instant::now();
    let ws = Workspace::prepare(config)?;
    let attacker = Attacker::spawn(
        &ws.path(&config.victim_file),
        &ws.path(&config.decoy_file),
        &ws.path(&config.swap_file),
        &ws.path(STOP_FILE),
        config.attacker_pause,
    )?;

    let request = ExecRequest {
        args: vec![
            config.max_iterations.to_string(),
            format!("{:o}", config.target_mode),
            config.victim_file.clone(),
            config.decoy_file.clone(),
            config.swap_file.clone(),
        ],
        working_dir: Some(ws.dir.clone()),
        limits: ExecLimits::with_wall_time(config.timeout),
        ..ExecRequest::default()
    };
    let run = sandbox.run(artifact, &request);
    let cycles = attacker.stop(Duration::from_secs(2));
    let result = run?;

    if result.timed_out || started.elapsed() > config.timeout + Duration::from_secs(1) {
        return Err(RaceError::Timeout(config.timeout));
    }
    let Some(cycles) = cycles else {
        return Err(RaceError::HarnessError("attacker died without reporting".into()));
    };
    if !result.exit_status.success() {
        return Err(RaceError::HarnessError(format!(
            "wrapper failed ({}): {}",
            result.exit_status,
            result.stderr_text().lines().next().unwrap_or("")
        )));
    }
    let stdout = result.stdout_text();
    let (iterations, wrapper_detected) = parse_wrapper_output(&stdout)
        .ok_or_else(|| RaceError::HarnessError(format!("unexpected wrapper output {stdout:?}")))?;

    let decoy = ws.decoy_state();
    let decoy_changed = matches!(&decoy, Some((_, mode)) if *mode == config.target_mode);
    if wrapper_detected != decoy_changed {
        return Err(RaceError::HarnessError(format!(
            "wrapper reported detected={wrapper_detected} but the decoy is {decoy:?}"
        )));
    }
    if !decoy_changed && cycles < iterations / LIVENESS_RATIO {
        return Err(RaceError::HarnessError(format!(
            "attacker made only {cycles} swap(s) during {iterations} iterations"
        )));
    }
    let evidence = if decoy_changed {
        format!(
            "mode of the decoy {} changed to {:o} after {iterations} call(s): the mode of the wrong file was changed",
            config.decoy_file, config.target_mode
        )
    } else {
        format!(
            "decoy {} kept mode {:o} over {iterations} call(s) and {cycles} swap(s)",
            config.decoy_file,
            decoy.map(|d| d.1).unwrap_or(DECOY_MODE)
        )
    };
    Ok(RaceVerdict {
        detected: decoy_changed,
        iterations_used: if decoy_changed { iterations } else { config.max_iterations },
        evidence,
        attacker_cycles: cycles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: u64,
    pub c: f64,
}

/// Empirical CDF of the iteration count at which the race is detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceCalibrationCurve {
    pub trials: u64,
    pub detected_trials: u64,
    pub max_iterations: u64,
    pub points: Vec<CurvePoint>,
}

impl RaceCalibrationCurve {
    /// Builds the curve from per-trial outcomes (`Some(iterations)` when the
    /// race was detected). `c(n)` is the fraction of trials detected within
    /// `n` iterations.
    pub fn from_outcomes(outcomes: &[Option<u64>], max_iterations: u64) -> Self {
        let trials = outcomes.len() as u64;
        let mut hits: Vec<u64> = outcomes.iter().flatten().copied().collect();
        hits.sort_unstable();
        let detected = hits.len() as u64;
        let mut points: Vec<CurvePoint> = Vec::new();
        for (i, &n) in hits.iter().enumerate() {
            let c = (i + 1) as f64 / trials as f64;
            match points.last_mut() {
                Some(last) if last.n == n => last.c = c,
                _ => points.push(CurvePoint { n, c }),
            }
        }
        if trials > 0 && detected < trials && points.last().is_none_or(|p| p.n < max_iterations) {
            points.push(CurvePoint {
                n: max_iterations,
                c: detected as f64 / trials as f64,
            });
        }
        RaceCalibrationCurve {
            trials,
            detected_trials: detected,
            max_iterations,
            points,
        }
    }

    /// `c(n)`: detection probability within `n` iterations.
    pub fn c_at(&self, n: u64) -> f64 {
        self.points.iter().take_while(|p| p.n <= n).last().map_or(0.0, |p| p.c)
    }

    /// Structural validity: bounded, nondecreasing, consistent tail.
    pub fn check(&self) -> Result<(), String> {
        let mut prev = (0u64, 0.0f64);
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.c) {
                return Err(format!("c({}) = {} is out of [0, 1]", p.n, p.c));
            }
            if p.n < prev.0 || p.c < prev.1 {
                return Err(format!("curve decreases at n = {}", p.n));
            }
            prev = (p.n, p.c);
        }
        if self.trials > 0 {
            let tail = self.points.last().map_or(0.0, |p| p.c);
            let expected = self.detected_trials as f64 / self.trials as f64;
            if (tail - expected).abs() > 1e-12 {
                return Err(format!("last point {tail} differs from detected/trials {expected}"));
            }
        }
        Ok(())
    }

    /// CSV with header `n,c`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "c"]).expect("in-memory write");
        for p in &self.points {
            w.write_record([p.n.to_string(), format!("{:.6}", p.c)]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
    }
}

/// Repeats [`detect_toctou`] `trials` times and builds the curve.
pub fn calibrate(sandbox: &Sandbox, artifact: &BuildArtifact, config: &RaceJobConfig, trials: u64) -> Result<RaceCalibrationCurve, RaceError> {
    calibrate_with_progress(sandbox, artifact, config, trials, |_, _| {})
}

/// [`calibrate`] with a callback after every trial `(done, total)`.
pub fn calibrate_with_progress(
    sandbox: &Sandbox,
    artifact: &BuildArtifact,
    config: &RaceJobConfig,
    trials: u64,
    mut progress: impl FnMut(u64, u64),
) -> Result<RaceCalibrationCurve, RaceError> {
    if trials == 0 {
        return Err(RaceError::InvalidConfig("calibration needs at least one trial".into()));
    }
    let mut outcomes = Vec::with_capacity(trials as usize);
    for i in 0..trials {
        let v = detect_toctou(sandbox, artifact, config)?;
        outcomes.push(v.detected.then_some(v.iterations_used));
        progress(i + 1, trials);
    }
    Ok(RaceCalibrationCurve::from_outcomes(&outcomes, config.max_iterations))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "n")]
pub enum RequiredIterations {
    Reached(u64),
    Unreachable,
}

/// Smallest `n` with `c(n) >= target`.
pub fn required_iterations(curve: &RaceCalibrationCurve, target: f64) -> RequiredIterations {
    curve
        .points
        .iter()
        .find(|p| p.c >= target)
        .map_or(RequiredIterations::Unreachable, |p| RequiredIterations::Reached(p.n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_from_outcomes() {
        let curve = RaceCalibrationCurve::from_outcomes(&[Some(10), Some(30), Some(10), None], 100);
        assert_eq!(
            curve.points,
            [
                CurvePoint { n: 10, c: 0.5 },
                CurvePoint { n: 30, c: 0.75 },
                CurvePoint { n: 100, c: 0.75 }
            ]
        );
        curve.check().unwrap();
        assert_eq!(curve.c_at(9), 0.0);
        assert_eq!(curve.c_at(29), 0.5);
        assert_eq!(curve.c_at(10_000), 0.75);
        assert_eq!(required_iterations(&curve, 0.5), RequiredIterations::Reached(10));
        assert_eq!(required_iterations(&curve, 0.8), RequiredIterations::Unreachable);
    }

    #[test]
    fn flat_and_single_trial_curves() {
        let flat = RaceCalibrationCurve::from_outcomes(&[None; 5], 10_000);
        assert_eq!(flat.points, [CurvePoint { n: 10_000, c: 0.0 }]);
        assert_eq!(required_iterations(&flat, 0.99), RequiredIterations::Unreachable);

        let one = RaceCalibrationCurve::from_outcomes(&[Some(412)], 10_000);
        assert_eq!(one.points, [CurvePoint { n: 412, c: 1.0 }]);
        one.check().unwrap();
    }

    #[test]
    fn strict_target() {
        let mut outcomes: Vec<Option<u64>> = (1..=499).map(Some).collect();
        outcomes.push(None);
        let curve = RaceCalibrationCurve::from_outcomes(&outcomes, 10_000);
        assert!((curve.c_at(10_000) - 0.998).abs() < 1e-12);
        assert_eq!(required_iterations(&curve, 1.0), RequiredIterations::Unreachable);
    }

    #[test]
    fn csv_output() {
        let curve = RaceCalibrationCurve::from_outcomes(&[Some(3), Some(5)], 10);
        assert_eq!(curve.to_csv(), "n,c\n3,0.500000\n5,1.000000\n");
    }

    #[test]
    fn wrapper_output_parsing() {
        assert_eq!(parse_wrapper_output("iterations=12 detected=1 observed_swaps=3\n"), Some((12, true)));
        assert_eq!(parse_wrapper_output("iterations=10000 detected=0 observed_swaps=0"), Some((10000, false)));
        assert_eq!(parse_wrapper_output("garbage"), None);
    }

    #[test]
    fn config_checks() {
        let mut c = RaceJobConfig::default();
        assert!(c.check().is_ok());
        c.decoy_file = c.victim_file.clone();
        assert!(c.check().is_err());
    }
}
