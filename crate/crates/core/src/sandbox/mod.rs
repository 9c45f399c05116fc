//! Compiles submissions under named build profiles and runs the resulting
//! binaries with a wall-clock limit in a private working directory.
//!
//! Isolation is process-level: every job gets its own temporary directory,
//! its own session (so the whole process group can be killed), a cleared
//! environment, resource limits, and a fresh network namespace where the
//! kernel allows it. There is no container.

mod profile;
mod reports;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Condvar, LazyLock, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use tempfile::TempDir;
use thiserror::Error;

pub use profile::{BuildProfile, Instrumentation, ProfileName};
pub use reports::segment_reports;

pub const TOOLCHAIN_ENV: &str = "CODE_DOJO_TOOLCHAIN";
pub const DEFAULT_COMPILER: &str = "g++";
pub const DEFAULT_WALL_TIME: Duration = Duration::from_secs(10);
pub const DEFAULT_MAX_OUTPUT: usize = 1 << 20;

const SOURCE_EXTENSIONS: [&str; 5] = ["c", "cc", "cpp", "cxx", "C"];
const BINARY_NAME: &str = "program";

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("compilation failed with {} error(s)", .diagnostics.iter().filter(|d| d.severity.is_error()).count())]
    CompileError {
        diagnostics: Vec<Diagnostic>,
        output: String,
    },
    #[error("toolchain {0:?} is not available")]
    ToolchainMissing(PathBuf),
    #[error("two sources share the file name {0:?}")]
    DuplicateSource(String),
    #[error("sandbox setup failed: {0}")]
    SandboxSetupError(#[source] io::Error),
}

impl SandboxError {
    pub fn first_error(&self) -> Option<&Diagnostic> {
        match self {
            SandboxError::CompileError { diagnostics, .. } => {
                diagnostics.iter().find(|d| d.severity.is_error())
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticSeverity {
    FatalError,
    Error,
    Warning,
    Note,
}

impl DiagnosticSeverity {
    pub fn is_error(self) -> bool {
        matches!(self, DiagnosticSeverity::Error | DiagnosticSeverity::FatalError)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub line: u32,
    pub severity: DiagnosticSeverity,
    pub message: String,
}

static DIAG_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<file>[^:\s][^:]*):(?P<line>\d+):(?:\d+:)? (?P<sev>fatal error|error|warning|note): (?P<msg>.*)$")
        .unwrap()
});

/// Parses compiler output into diagnostics. Linker failures, which carry
/// no source line, are reported against `<link>` at line 0.
pub fn parse_diagnostics(output: &str) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for line in output.lines() {
        if let Some(c) = DIAG_LINE.captures(line) {
            let severity = match &c["sev"] {
                "fatal error" => DiagnosticSeverity::FatalError,
                "error" => DiagnosticSeverity::Error,
                "warning" => DiagnosticSeverity::Warning,
                _ => DiagnosticSeverity::Note,
            };
            diags.push(Diagnostic {
                file: c["file"].to_string(),
                line: c["line"].parse().unwrap_or(0),
                severity,
                message: c["msg"].to_string(),
            });
        } else if line.contains("undefined reference to") || line.starts_with("collect2: error:") {
            diags.push(Diagnostic {
                file: "<link>".to_string(),
                line: 0,
                severity: DiagnosticSeverity::Error,
                message: line
                    .rsplit_once(": ")
                    .map(|(_, m)| m)
                    .unwrap_or(line)
                    .trim()
                    .to_string(),
            });
        }
    }
    diags
}

/// A compiled binary and the directory that owns it.
#[derive(Debug, Clone)]
pub struct BuildArtifact {
    pub binary_path: PathBuf,
    pub profile: BuildProfile,
    pub compiler_diagnostics: Vec<Diagnostic>,
    job_dir: Arc<TempDir>,
}

impl BuildArtifact {
    pub fn job_dir(&self) -> &Path {
        self.job_dir.path()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitStatus {
    Code(i32),
    Signal(i32),
}

impl ExitStatus {
    pub fn success(self) -> bool {
        self == ExitStatus::Code(0)
    }
}

impl std::fmt::Display for ExitStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExitStatus::Code(c) => write!(f, "exit code {c}"),
            ExitStatus::Signal(s) => write!(f, "signal {s}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub exit_status: ExitStatus,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub runtime_reports: Vec<String>,
    pub wall_time: Duration,
    pub timed_out: bool,
}

impl ExecutionResult {
    pub fn stdout_text(&self) -> String {
        String::from_utf8_lossy(&self.stdout).into_owned()
    }

    pub fn stderr_text(&self) -> String {
        String::from_utf8_lossy(&self.stderr).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecLimits {
    pub wall_time: Duration,
    pub max_output_bytes: usize,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits {
            wall_time: DEFAULT_WALL_TIME,
            max_output_bytes: DEFAULT_MAX_OUTPUT,
        }
    }
}

impl ExecLimits {
    pub fn with_wall_time(wall_time: Duration) -> Self {
        ExecLimits {
            wall_time,
            ..Self::default()
        }
    }
}

/// Everything needed to run an artifact once.
#[derive(Debug, Clone, Default)]
pub struct ExecRequest {
    pub args: Vec<String>,
    pub env: Vec<(String, String)>,
    /// Run here instead of a fresh temporary directory. The caller owns the
    /// directory and must not share it with another job.
    pub working_dir: Option<PathBuf>,
    pub limits: ExecLimits,
}

#[derive(Debug, Clone)]
pub struct SandboxConfig {
    pub compiler: PathBuf,
    pub max_jobs: usize,
    pub isolate_network: bool,
    pub max_file_size: u64,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            compiler: std::env::var_os(TOOLCHAIN_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_COMPILER)),
            max_jobs: thread::available_parallelism().map(|n| n.get()).unwrap_or(1).max(2),
            isolate_network: true,
            max_file_size: 64 << 20,
        }
    }
}

#[derive(Debug)]
struct JobSlots {
    in_use: Mutex<usize>,
    freed: Condvar,
    capacity: usize,
}

struct SlotGuard<'a>(&'a JobSlots);

impl JobSlots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut in_use = self.in_use.lock().unwrap();
        while *in_use >= self.capacity {
            in_use = self.freed.wait(in_use).unwrap();
        }
        *in_use += 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_use.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// Compile/execute front end. Cheap to clone; clones share the job slots.
#[derive(Debug, Clone)]
pub struct Sandbox {
    config: Arc<SandboxConfig>,
    slots: Arc<JobSlots>,
}

impl Default for Sandbox {
    fn default() -> Self {
        Self::new(SandboxConfig::default())
    }
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Self {
        let capacity = config.max_jobs.max(1);
        Sandbox {
            config: Arc::new(config),
            slots: Arc::new(JobSlots {
                in_use: Mutex::new(0),
                freed: Condvar::new(),
                capacity,
            }),
        }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Checks that the compiler can be started.
    pub fn check_toolchain(&self) -> Result<String, SandboxError> {
        let out = Command::new(&self.config.compiler)
            .arg("--version")
            .output()
            .map_err(|_| SandboxError::ToolchainMissing(self.config.compiler.clone()))?;
        Ok(String::from_utf8_lossy(&out.stdout).lines().next().unwrap_or("").to_string())
    }

    /// Copies `sources` into a fresh job directory and compiles every C/C++
    /// translation unit among them into one binary. Headers are copied
    /// alongside so that `#include "x.h"` resolves.
    pub fn compile(&self, sources: &[PathBuf], profile: &BuildProfile) -> Result<BuildArtifact, SandboxError> {
        profile
            .check()
            .map_err(|e| SandboxError::SandboxSetupError(io::Error::new(io::ErrorKind::InvalidInput, e)))?;
        let _slot = self.slots.acquire();
        let job_dir = tempfile::Builder::new()
            .prefix("dojo-build-")
            .tempdir()
            .map_err(SandboxError::SandboxSetupError)?;

        let mut names = BTreeSet::new();
        let mut units = Vec::new();
        for src in sources {
            let name = src
                .file_name()
                .ok_or_else(|| {
                    SandboxError::SandboxSetupError(io::Error::new(
                        io::ErrorKind::InvalidInput,
                        format!("not a file: {}", src.display()),
                    ))
                })?
                .to_string_lossy()
                .into_owned();
            if !names.insert(name.clone()) {
                return Err(SandboxError::DuplicateSource(name));
            }
            fs::copy(src, job_dir.path().join(&name)).map_err(SandboxError::SandboxSetupError)?;
            let is_unit = Path::new(&name)
                .extension()
                .map(|e| SOURCE_EXTENSIONS.contains(&e.to_string_lossy().as_ref()))
                .unwrap_or(false);
            if is_unit {
                units.push(name);
            }
        }
        if units.is_empty() {
            return Err(SandboxError::CompileError {
                diagnostics: vec![Diagnostic {
                    file: "<input>".into(),
                    line: 0,
                    severity: DiagnosticSeverity::Error,
                    message: "no translation unit among the sources".into(),
                }],
                output: String::new(),
            });
        }

        let output = Command::new(&self.config.compiler)
            .current_dir(job_dir.path())
            .args(profile.flags())
            .arg("-fdiagnostics-color=never")
            .args(&units)
            .arg("-o")
            .arg(BINARY_NAME)
            .env("LC_ALL", "C")
            .output()
            .map_err(|e| match e.kind() {
                io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
                    SandboxError::ToolchainMissing(self.config.compiler.clone())
                }
                _ => SandboxError::SandboxSetupError(e),
            })?;

        let text = normalize_paths(&String::from_utf8_lossy(&output.stderr), job_dir.path());
        let diagnostics = parse_diagnostics(&text);
        let binary_path = job_dir.path().join(BINARY_NAME);
        if !output.status.success() || !binary_path.is_file() {
            return Err(SandboxError::CompileError {
                diagnostics,
                output: text,
            });
        }
        Ok(BuildArtifact {
            binary_path,
            profile: profile.clone(),
            compiler_diagnostics: diagnostics,
            job_dir: Arc::new(job_dir),
        })
    }

    pub fn execute(&self, artifact: &BuildArtifact, args: &[String], limits: ExecLimits) -> Result<ExecutionResult, SandboxError> {
        self.run(
            artifact,
            &ExecRequest {
                args: args.to_vec(),
                limits,
                ..ExecRequest::default()
            },
        )
    }

    /// Runs the artifact. Output beyond `max_output_bytes` per stream is
    /// discarded; the process group is killed at the wall-clock limit.
    pub fn run(&self, artifact: &BuildArtifact, request: &ExecRequest) -> Result<ExecutionResult, SandboxError> {
        let _slot = self.slots.acquire();
        let own_dir;
        let work_dir = match &request.working_dir {
            Some(dir) => dir.as_path(),
            None => {
                own_dir = tempfile::Builder::new()
                    .prefix("dojo-run-")
                    .tempdir()
                    .map_err(SandboxError::SandboxSetupError)?;
                own_dir.path()
            }
        };

        let mut cmd = Command::new(&artifact.binary_path);
        cmd.args(&request.args)
            .current_dir(work_dir)
            .env_clear()
            .env("PATH", "/usr/local/bin:/usr/bin:/bin")
            .env("HOME", work_dir)
            .env("LC_ALL", "C")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        for (k, v) in &request.env {
            cmd.env(k, v);
        }
        let cpu_limit = request.limits.wall_time.as_secs() + 2;
        let file_limit = self.config.max_file_size;
        let isolate_network = self.config.isolate_network;
        // SAFETY: the closure only performs async-signal-safe system calls.
        unsafe {
            cmd.pre_exec(move || {
                if libc::setsid() == -1 {
                    return Err(io::Error::last_os_error());
                }
                if isolate_network {
                    // Needs CAP_SYS_ADMIN; without it the job keeps the host network.
                    libc::unshare(libc::CLONE_NEWNET);
                }
                set_limit(libc::RLIMIT_CORE, 0);
                set_limit(libc::RLIMIT_FSIZE, file_limit);
                set_limit(libc::RLIMIT_CPU, cpu_limit);
                Ok(())
            });
        }

        let started = Instant::now();
        let mut child = cmd.spawn().map_err(SandboxError::SandboxSetupError)?;
        let limit = request.limits.max_output_bytes;
        let stdout = spawn_reader(child.stdout.take(), limit);
        let stderr = spawn_reader(child.stderr.take(), limit);

        let (status, timed_out) = wait_with_deadline(&mut child, request.limits.wall_time)
            .map_err(SandboxError::SandboxSetupError)?;
        let wall_time = started.elapsed();
        let stdout = stdout.join().unwrap_or_default();
        let stderr = stderr.join().unwrap_or_default();

        let exit_status = match (status.code(), status.signal()) {
            (Some(code), _) => ExitStatus::Code(code),
            (None, Some(sig)) => ExitStatus::Signal(sig),
            (None, None) => ExitStatus::Code(-1),
        };
        let runtime_reports = segment_reports(&String::from_utf8_lossy(&stderr));
        Ok(ExecutionResult {
            exit_status,
            stdout,
            stderr,
            runtime_reports,
            wall_time,
            timed_out,
        })
    }
}

fn set_limit(resource: libc::__rlimit_resource_t, value: u64) {
    let lim = libc::rlimit {
        rlim_cur: value as libc::rlim_t,
        rlim_max: value as libc::rlim_t,
    };
    // SAFETY: plain system call on a stack value.
    unsafe {
        libc::setrlimit(resource, &lim);
    }
}

fn spawn_reader<R: Read + Send + 'static>(stream: Option<R>, limit: usize) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let Some(mut stream) = stream else {
            return kept;
        };
        let mut buf = [0u8; 8192];
        loop {
            match stream.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    let room = limit.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        kept
    })
}

fn kill_group(child: &Child) {
    // SAFETY: signals the process group created by setsid in pre_exec.
    unsafe {
        libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
    }
}

fn wait_with_deadline(child: &mut Child, limit: Duration) -> io::Result<(std::process::ExitStatus, bool)> {
    let deadline = Instant::now() + limit;
    let mut pause = Duration::from_micros(200);
    loop {
        if let Some(status) = child.try_wait()? {
            // Reap anything the program left running in its group so the
            // output pipes close.
            kill_group(child);
            return Ok((status, false));
        }
        let now = Instant::now();
        if now >= deadline {
            kill_group(child);
            let _ = child.kill();
            let status = child.wait()?;
            return Ok((status, true));
        }
        thread::sleep(pause.min(deadline - now));
        pause = (pause * 2).min(Duration::from_millis(10));
    }
}

/// Replaces the job directory prefix so diagnostics are identical between
/// runs.
fn normalize_paths(text: &str, job_dir: &Path) -> String {
    let mut prefix: OsString = job_dir.as_os_str().to_owned();
    prefix.push("/");
    text.replace(prefix.to_string_lossy().as_ref(), "")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_gcc_diagnostics() {
        let out = "\
broken.cpp: In function 'int main()':
broken.cpp:3:12: error: expected ';' before 'return'
    3 |   int x = 1
      |            ^
broken.cpp:2:7: warning: unused variable 'y' [-Wunused-variable]
/usr/bin/ld: /tmp/cc.o: in function `main':
t.cpp:(.text+0x1d): undefined reference to `FCplx::get(int)'
collect2: error: ld returned 1 exit status
";
        let d = parse_diagnostics(out);
        assert_eq!(d.len(), 4);
        assert_eq!(d[0].file, "broken.cpp");
        assert_eq!(d[0].line, 3);
        assert_eq!(d[0].severity, DiagnosticSeverity::Error);
        assert_eq!(d[1].severity, DiagnosticSeverity::Warning);
        assert_eq!(d[2].file, "<link>");
        assert!(d[2].message.contains("FCplx::get"));
    }

    #[test]
    fn job_dir_prefix_is_stripped() {
        let text = "/tmp/dojo-build-abc/sort.cpp:3:1: error: x";
        assert_eq!(
            normalize_paths(text, Path::new("/tmp/dojo-build-abc")),
            "sort.cpp:3:1: error: x"
        );
    }
}
