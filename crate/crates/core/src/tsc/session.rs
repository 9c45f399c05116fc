//! A debugger child process driven over its machine interface.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::mi::{self, Record, RecordKind, Value};
use super::{StepGranularity, TscError};

pub const DEBUGGER_ENV: &str = "CODE_DOJO_DEBUGGER";
pub const DEFAULT_DEBUGGER: &str = "gdb";

#[derive(Debug, Clone)]
pub struct DebuggerConfig {
    pub debugger: PathBuf,
    /// Upper bound on the wait for any single debugger response.
    pub command_timeout: Duration,
}

impl Default for DebuggerConfig {
    fn default() -> Self {
        DebuggerConfig {
            debugger: std::env::var_os(DEBUGGER_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_DEBUGGER)),
            command_timeout: Duration::from_secs(20),
        }
    }
}

/// One frame as reported in a stop event.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Frame {
    addr: String,
    func: String,
}

impl Frame {
    fn from_value(v: Option<&Value>) -> Frame {
        let get = |k| v.and_then(|v| v.get_str(k)).unwrap_or_default().to_string();
        Frame {
            addr: get("addr"),
            func: get("func"),
        }
    }
}

pub(crate) struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    watchdog: Arc<Watchdog>,
    pending: VecDeque<Record>,
    next_token: u64,
    timeout: Duration,
    function: String,
}

impl Session {
    /// Starts the debugger on `binary` and places a breakpoint on
    /// `function`.
    pub fn start(config: &DebuggerConfig, binary: &Path, function: &str) -> Result<Session, TscError> {
        let mut child = Command::new(&config.debugger)
            .args(["--nx", "--quiet", "--interpreter=mi3"])
            // Pretty printers and frame arguments are evaluated at every
            // stop and dominate the cost of a step.
            .args(["-iex", "set auto-load off", "-iex", "set print frame-arguments none"])
            .arg(binary)
            .env("LC_ALL", "C")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|_| TscError::DebuggerMissing(config.debugger.clone()))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let watchdog = Watchdog::spawn(child.id());
        let mut session = Session {
            child,
            stdin,
            stdout,
            watchdog,
            pending: VecDeque::new(),
            next_token: 1,
            timeout: config.command_timeout,
            function: function.to_string(),
        };
        for setup in [
            "-gdb-set pagination off",
            "-gdb-set confirm off",
            "-gdb-set startup-with-shell off",
            "-gdb-set disable-randomization on",
            "-inferior-tty-set /dev/null",
        ] {
            session.command_ok(setup)?;
        }
        let r = session.command(&format!("-break-insert --qualified {function}"))?;
        if r.kind == RecordKind::Result("error".into()) {
            return Err(TscError::SymbolNotFound(function.to_string()));
        }
        Ok(session)
    }

    fn next_record(&mut self, deadline: Instant) -> Result<Record, TscError> {
        self.watchdog.arm(deadline);
        let mut line = String::new();
        let result = loop {
            line.clear();
            match self.stdout.read_line(&mut line) {
                Ok(0) | Err(_) => {
                    break Err(TscError::DebuggerProtocolError(if self.watchdog.fired() {
                        "debugger did not respond in time".into()
                    } else {
                        "debugger exited unexpectedly".into()
                    }))
                }
                Ok(_) => {
                    if let Some(r) = mi::parse_line(&line) {
                        break Ok(r);
                    }
                }
            }
        };
        self.watchdog.disarm();
        result
    }

    /// Sends a command and returns its result record. Exec-async records
    /// seen while waiting are kept for [`Session::wait_stopped`].
    fn command(&mut self, cmd: &str) -> Result<Record, TscError> {
        let token = self.next_token;
        self.next_token += 1;
        writeln!(self.stdin, "{token}{cmd}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| TscError::DebuggerProtocolError(format!("cannot write to debugger: {e}")))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let r = self.next_record(deadline)?;
            match &r.kind {
                RecordKind::Result(_) if r.token == Some(token) => return Ok(r),
                RecordKind::ExecAsync(class) if class == "stopped" => self.pending.push_back(r),
                _ => {}
            }
        }
    }

    fn command_ok(&mut self, cmd: &str) -> Result<Record, TscError> {
        let r = self.command(cmd)?;
        match &r.kind {
            RecordKind::Result(class) if class == "done" || class == "running" => Ok(r),
            _ => Err(TscError::DebuggerProtocolError(format!(
                "{cmd}: {}",
                r.get_str("msg").unwrap_or("unexpected response")
            ))),
        }
    }

    fn wait_stopped(&mut self) -> Result<Record, TscError> {
        if let Some(r) = self.pending.pop_front() {
            return Ok(r);
        }
        let deadline = Instant::now() + self.timeout;
        loop {
            let r = self.next_record(deadline)?;
            if r.kind == RecordKind::ExecAsync("stopped".into()) {
                return Ok(r);
            }
        }
    }

    fn depth(&mut self) -> Result<usize, TscError> {
        let r = self.command_ok("-stack-info-depth")?;
        r.get_str("depth")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| TscError::DebuggerProtocolError("missing stack depth".into()))
    }

    fn caller_frame(&mut self) -> Result<Frame, TscError> {
        let r = self.command_ok("-stack-list-frames 1 1")?;
        match r.results.get("stack") {
            Some(Value::List(frames)) if !frames.is_empty() => Ok(Frame::from_value(frames.first())),
            _ => Err(TscError::DebuggerProtocolError("target function has no caller frame".into())),
        }
    }

    /// Runs the program once with `args` and counts step events from the
    /// breakpoint on the target function until control is back in its
    /// caller.
    pub fn count(&mut self, args: &[String], granularity: StepGranularity, ceiling: u64) -> Result<u64, TscError> {
        let arguments = args.join(" ");
        self.command_ok(&format!("-exec-arguments {arguments}"))?;
        self.command_ok("-exec-run")?;
        let stop = self.wait_stopped()?;
        match stop.get_str("reason") {
            Some("breakpoint-hit") => {}
            Some(r) if r.starts_with("exited") => {
                return Err(TscError::DebuggerProtocolError(format!(
                    "program exited without calling {}",
                    self.function
                )))
            }
            other => {
                return Err(TscError::DebuggerProtocolError(format!(
                    "unexpected stop before {}: {}",
                    self.function,
                    other.unwrap_or("unknown")
                )))
            }
        }
        let base = self.depth()?;
        let caller = self.caller_frame()?;
        let step_cmd = match granularity {
            StepGranularity::SourceLine => "-exec-step",
            StepGranularity::MachineInstruction => "-exec-step-instruction",
        };

        let mut count = 0u64;
        loop {
            if count >= ceiling {
                return Err(TscError::StepCeilingExceeded { ceiling });
            }
            self.command_ok(step_cmd)?;
            let stop = self.wait_stopped()?;
            count += 1;
            match stop.get_str("reason") {
                Some("end-stepping-range") => {}
                Some(r) if r.starts_with("exited") => return Ok(count),
                Some("breakpoint-hit") | Some("function-finished") => {}
                other => {
                    return Err(TscError::DebuggerProtocolError(format!(
                        "step stopped for {}",
                        other.unwrap_or("an unknown reason")
                    )))
                }
            }
            let frame = Frame::from_value(stop.results.get("frame"));
            // Only a stop that looks like the caller needs the depth query.
            let maybe_returned = match granularity {
                StepGranularity::SourceLine => frame.func == caller.func,
                StepGranularity::MachineInstruction => frame.addr == caller.addr,
            };
            if maybe_returned && self.depth()? < base {
                break;
            }
        }
        self.finish_run()?;
        Ok(count)
    }

    /// Lets the program run to completion so the next run starts clean.
    fn finish_run(&mut self) -> Result<(), TscError> {
        for _ in 0..8 {
            self.command_ok("-exec-continue")?;
            let stop = self.wait_stopped()?;
            match stop.get_str("reason") {
                Some(r) if r.starts_with("exited") => return Ok(()),
                Some("breakpoint-hit") => continue,
                other => {
                    return Err(TscError::DebuggerProtocolError(format!(
                        "program did not exit cleanly: {}",
                        other.unwrap_or("unknown")
                    )))
                }
            }
        }
        Err(TscError::DebuggerProtocolError(format!(
            "{} is called more than once per run",
            self.function
        )))
    }
}

/// Kills the debugger when a response takes too long, which unblocks the
/// reader. Reading on the calling thread avoids a thread hand-off per
/// line; the watchdog only polls a progress stamp a few times a second.
struct Watchdog {
    origin: Instant,
    /// Milliseconds since `origin` by which the next record is due, or 0
    /// when no read is in progress.
    due_ms: AtomicU64,
    fired: AtomicBool,
    done: AtomicBool,
}

impl Watchdog {
    const POLL: Duration = Duration::from_millis(100);

    fn spawn(pid: u32) -> Arc<Watchdog> {
        let dog = Arc::new(Watchdog {
            origin: Instant::now(),
            due_ms: AtomicU64::new(0),
            fired: AtomicBool::new(false),
            done: AtomicBool::new(false),
        });
        let watcher = Arc::clone(&dog);
        thread::spawn(move || {
            while !watcher.done.load(Ordering::Acquire) {
                thread::sleep(Self::POLL);
                let due = watcher.due_ms.load(Ordering::Acquire);
                if due != 0 && watcher.now_ms() > due {
                    watcher.fired.store(true, Ordering::Release);
                    // SAFETY: signals our own child process.
                    unsafe {
                        libc::kill(pid as libc::pid_t, libc::SIGKILL);
                    }
                    return;
                }
            }
        });
        dog
    }

    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64 + 1
    }

    fn arm(&self, at: Instant) {
        let ms = at.saturating_duration_since(self.origin).as_millis() as u64 + 1;
        self.due_ms.store(ms, Ordering::Release);
    }

    fn disarm(&self) {
        self.due_ms.store(0, Ordering::Release);
    }

    fn fired(&self) -> bool {
        self.fired.load(Ordering::Acquire)
    }

    fn stop(&self) {
        self.done.store(true, Ordering::Release);
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.watchdog.stop();
        let _ = writeln!(self.stdin, "-gdb-exit");
        let _ = self.stdin.flush();
        let deadline = Instant::now() + Duration::from_millis(500);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
