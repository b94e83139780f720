//! Child-process helpers shared by subjects, hooks, and external profilers.

use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, ExitStatus};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

const POLL: Duration = Duration::from_millis(5);

/// `sh -c <command>` in its own process group so the whole tree can be signalled.
pub fn shell(command: &str, dir: Option<&Path>, env: &[(String, String)]) -> Command {
    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg(command);
    if let Some(dir) = dir {
        cmd.current_dir(dir);
    }
    cmd.envs(env.iter().map(|(k, v)| (k.as_str(), v.as_str())));
    cmd.process_group(0);
    cmd
}

/// Sends `signal` to the process group led by `pid`.
pub fn signal_group(pid: u32, signal: i32) {
    // SAFETY: kill(2) has no memory-safety preconditions.
    unsafe {
        libc::kill(-(pid as i32), signal);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitOutcome {
    Exited(ExitStatus),
    TimedOut(ExitStatus),
    Cancelled(ExitStatus),
}

impl WaitOutcome {
    pub fn status(self) -> ExitStatus {
        match self {
            WaitOutcome::Exited(s) | WaitOutcome::TimedOut(s) | WaitOutcome::Cancelled(s) => s,
        }
    }
}

/// Waits for `child`, killing its process group on timeout or cancellation.
pub fn wait_bounded(
    child: &mut Child,
    timeout: Duration,
    cancel: Option<&AtomicBool>,
) -> std::io::Result<WaitOutcome> {
    let deadline = Instant::now() + timeout;
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(WaitOutcome::Exited(status));
        }
        let cancelled = cancel.is_some_and(|c| c.load(Ordering::SeqCst));
        if cancelled || Instant::now() >= deadline {
            signal_group(child.id(), libc::SIGKILL);
            let status = child.wait()?;
            return Ok(if cancelled {
                WaitOutcome::Cancelled(status)
            } else {
                WaitOutcome::TimedOut(status)
            });
        }
        std::thread::sleep(POLL);
    }
}

/// Exit code, or `128 + signal` for signal deaths as shells report them.
pub fn exit_code(status: ExitStatus) -> i32 {
    status
        .code()
        .or_else(|| status.signal().map(|s| 128 + s))
        .unwrap_or(-1)
}
