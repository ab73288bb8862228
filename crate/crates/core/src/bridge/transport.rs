use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::BridgeError;

/// One request line out, one response line back.
pub trait Transport: Send {
    fn round_trip(&mut self, line: &str) -> Result<String, BridgeError>;
}

impl<F: FnMut(&str) -> Result<String, BridgeError> + Send> Transport for F {
    fn round_trip(&mut self, line: &str) -> Result<String, BridgeError> {
        self(line)
    }
}

/// External model server speaking the protocol over its stdin/stdout.
pub struct ProcessTransport {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl ProcessTransport {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

    /// Starts `command` (whitespace-separated argv).
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, BridgeError> {
        let argv: Vec<&str> = command.split_whitespace().collect();
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| BridgeError::Spawn("empty bridge command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BridgeError::Spawn(format!("{command}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout,
        })
    }
}

impl Transport for ProcessTransport {
    fn round_trip(&mut self, line: &str) -> Result<String, BridgeError> {
        let stdin = self.stdin.as_mut().ok_or(BridgeError::Closed)?;
        writeln!(stdin, "{line}")
            .and_then(|_| stdin.flush())
            .map_err(|_| BridgeError::Closed)?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(resp)) => Ok(resp),
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => Err(BridgeError::Closed),
            Err(RecvTimeoutError::Timeout) => Err(BridgeError::Timeout(self.timeout)),
        }
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved server exit on its own
        self.stdin.take();
        if !matches!(self.child.try_wait(), Ok(Some(_))) {
            thread::sleep(Duration::from_millis(20));
            if !matches!(self.child.try_wait(), Ok(Some(_))) {
                let _ = self.child.kill();
            }
        }
        let _ = self.child.wait();
    }
}
