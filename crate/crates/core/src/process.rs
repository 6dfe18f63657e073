//! Line-oriented subprocess backends.
//!
//! The child receives one request per line on stdin and must answer each with
//! exactly one line on stdout. An empty line is a valid (empty) answer; the
//! child exiting before answering is a backend error.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use crate::error::{Error, Result};

struct Pipes {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

pub struct LineProcess {
    command: String,
    pipes: Mutex<Pipes>,
}

impl LineProcess {
    /// Spawns `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot spawn {command:?}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(LineProcess {
            command: command.to_owned(),
            pipes: Mutex::new(Pipes {
                child,
                stdin,
                stdout,
            }),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Sends one line and waits for the one-line reply (without its newline).
    pub fn request(&self, line: &str) -> Result<String> {
        if line.contains('\n') {
            return Err(Error::invalid("request must be a single line"));
        }
        let mut pipes = self.pipes.lock().expect("backend mutex poisoned");
        let fail = |what: &str| Error::Backend(format!("{}: {what}", self.command));
        let stdin = pipes.stdin.as_mut().ok_or_else(|| fail("stdin closed"))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| fail(&format!("write failed: {e}")))?;
        let mut reply = String::new();
        let n = pipes
            .stdout
            .read_line(&mut reply)
            .map_err(|e| fail(&format!("read failed: {e}")))?;
        if n == 0 {
            return Err(fail("process exited before responding"));
        }
        if reply.ends_with('\n') {
            reply.pop();
            if reply.ends_with('\r') {
                reply.pop();
            }
        }
        Ok(reply)
    }
}

impl Drop for LineProcess {
    fn drop(&mut self) {
        if let Ok(pipes) = self.pipes.get_mut() {
            pipes.stdin.take();
            let _ = pipes.child.kill();
            let _ = pipes.child.wait();
        }
    }
}
