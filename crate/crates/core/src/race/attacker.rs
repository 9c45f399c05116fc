//! The file-swapping attacker, run as a forked child process.

use std::ffi::CString;
use std::io;
use std::os::unix::ffi::OsStrExt;
use std::path::Path;
use std::time::{Duration, Instant};

/// A running attacker. Dropping it kills the process.
pub(crate) struct Attacker {
    pid: libc::pid_t,
    count_fd: libc::c_int,
    stop_path: CString,
    reaped: bool,
}

fn cpath(p: &Path) -> io::Result<CString> {
    CString::new(p.as_os_str().as_bytes()).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))
}

impl Attacker {
    /// Forks a process that swaps `a` and `b` through `tmp` until `stop`
    /// exists, pausing up to `max_pause` after each cycle. The pause varies
    /// cycle by cycle so the swaps drift across the victim's race window
    /// even when both processes share one CPU.
    pub fn spawn(a: &Path, b: &Path, tmp: &Path, stop: &Path, max_pause: Duration) -> io::Result<Attacker> {
        let (a, b, tmp, stop_path) = (cpath(a)?, cpath(b)?, cpath(tmp)?, cpath(stop)?);
        let max_pause_ns = max_pause.as_nanos().min(999_999_999) as libc::c_long;
        let mut fds = [0 as libc::c_int; 2];
        // SAFETY: plain system call on a local array.
        if unsafe { libc::pipe2(fds.as_mut_ptr(), libc::O_CLOEXEC) } != 0 {
            return Err(io::Error::last_os_error());
        }
        // SAFETY: the child only issues async-signal-safe system calls on
        // memory prepared before the fork and leaves with _exit.
        let pid = unsafe { libc::fork() };
        if pid < 0 {
            let err = io::Error::last_os_error();
            unsafe {
                libc::close(fds[0]);
                libc::close(fds[1]);
            }
            return Err(err);
        }
        if pid == 0 {
            unsafe {
                libc::prctl(libc::PR_SET_PDEATHSIG, libc::SIGKILL);
                libc::close(fds[0]);
                let mut cycles: u64 = 0;
                while libc::access(stop_path.as_ptr(), libc::F_OK) != 0 {
                    libc::rename(a.as_ptr(), tmp.as_ptr());
                    libc::rename(b.as_ptr(), a.as_ptr());
                    libc::rename(tmp.as_ptr(), b.as_ptr());
                    cycles += 1;
                    let pause = libc::timespec {
                        tv_sec: 0,
                        tv_nsec: (cycles as libc::c_long).wrapping_mul(7919) % (max_pause_ns + 1),
                    };
                    libc::nanosleep(&pause, std::ptr::null_mut());
                }
                let bytes = cycles.to_ne_bytes();
                libc::write(fds[1], bytes.as_ptr().cast(), bytes.len());
                libc::_exit(0);
            }
        }
        unsafe {
            libc::close(fds[1]);
        }
        Ok(Attacker {
            pid,
            count_fd: fds[0],
            stop_path,
            reaped: false,
        })
    }

    /// Asks the attacker to stop and returns how many swap cycles it made.
    /// Returns `None` when it had to be killed or died without reporting.
    pub fn stop(mut self, grace: Duration) -> Option<u64> {
        // SAFETY: creating the stop file with a path prepared earlier.
        unsafe {
            let fd = libc::open(
                self.stop_path.as_ptr(),
                libc::O_CREAT | libc::O_WRONLY | libc::O_CLOEXEC,
                0o600 as libc::c_uint,
            );
            if fd >= 0 {
                libc::close(fd);
            }
        }
        let mut pfd = libc::pollfd {
            fd: self.count_fd,
            events: libc::POLLIN,
            revents: 0,
        };
        let deadline = Instant::now() + grace;
        let mut cycles = None;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            // SAFETY: poll on our own pipe descriptor.
            let ready = unsafe { libc::poll(&mut pfd, 1, left.as_millis() as libc::c_int) };
            if ready > 0 {
                let mut buf = [0u8; 8];
                // SAFETY: reading into a local buffer of the stated size.
                let n = unsafe { libc::read(self.count_fd, buf.as_mut_ptr().cast(), buf.len()) };
                if n == 8 {
                    cycles = Some(u64::from_ne_bytes(buf));
                }
                break;
            }
            if ready == 0 || left.is_zero() {
                break;
            }
        }
        self.reap(cycles.is_none());
        cycles
    }

    fn reap(&mut self, kill: bool) {
        if self.reaped {
            return;
        }
        // SAFETY: signalling and reaping our own child.
        unsafe {
            if kill {
                libc::kill(self.pid, libc::SIGKILL);
            }
            let mut status = 0;
            if libc::waitpid(self.pid, &mut status, 0) < 0 && !kill {
                libc::kill(self.pid, libc::SIGKILL);
            }
        }
        self.reaped = true;
    }
}

impl Drop for Attacker {
    fn drop(&mut self) {
        self.reap(true);
        // SAFETY: closing our own descriptor once.
        unsafe {
            libc::close(self.count_fd);
        }
    }
}
