use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::{HarnessError, LanguageTag, Outcome, Runner};

pub const FILE_PLACEHOLDER: &str = "{file}";

/// Runs each program as a child process.
///
/// The program text is written to a temporary file whose path replaces
/// `{file}` in the command template (or is appended when the template has no
/// placeholder). The test input goes to standard input; standard output is
/// the observed output.
#[derive(Debug, Clone)]
pub struct SubprocessRunner {
    argv: Vec<String>,
    pub timeout: Duration,
    pub output_cap: usize,
}

impl SubprocessRunner {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);
    pub const DEFAULT_OUTPUT_CAP: usize = 64 * 1024;

    pub fn new(command_template: &str) -> Result<Self, HarnessError> {
        let argv: Vec<String> = command_template.split_whitespace().map(String::from).collect();
        if argv.is_empty() {
            return Err(HarnessError::Runner("empty command template".into()));
        }
        Ok(Self {
            argv,
            timeout: Self::DEFAULT_TIMEOUT,
            output_cap: Self::DEFAULT_OUTPUT_CAP,
        })
    }

    pub fn with_limits(mut self, timeout: Duration, output_cap: usize) -> Self {
        self.timeout = timeout;
        self.output_cap = output_cap;
        self
    }

    fn command(&self, file: &str) -> Command {
        let mut args: Vec<String> = self.argv.iter().map(|a| a.replace(FILE_PLACEHOLDER, file)).collect();
        if !self.argv.iter().any(|a| a.contains(FILE_PLACEHOLDER)) {
            args.push(file.to_string());
        }
        let mut cmd = Command::new(&args[0]);
        cmd.args(&args[1..])
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("LC_ALL", "C")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        cmd
    }

    fn run_process(&self, program: &str, input: &str) -> Result<Outcome, std::io::Error> {
        let mut file = tempfile::Builder::new().prefix("btp-prog-").tempfile()?;
        file.write_all(program.as_bytes())?;
        file.flush()?;
        let path = file.path().to_string_lossy().into_owned();

        let mut child = self.command(&path).spawn()?;
        let mut stdin = child.stdin.take().expect("stdin piped");
        let payload = input.as_bytes().to_vec();
        let writer = thread::spawn(move || {
            // the child may exit without reading its input
            let _ = stdin.write_all(&payload);
        });
        let mut stdout = child.stdout.take().expect("stdout piped");
        let cap = self.output_cap;
        let reader = thread::spawn(move || -> (Vec<u8>, bool) {
            let mut buf = Vec::new();
            let mut overflow = false;
            let mut chunk = [0u8; 8192];
            // keep draining past the cap so the child never blocks on a full pipe
            loop {
                match stdout.read(&mut chunk) {
                    Ok(0) | Err(_) => return (buf, overflow),
                    Ok(n) if overflow || buf.len() + n > cap => overflow = true,
                    Ok(n) => buf.extend_from_slice(&chunk[..n]),
                }
            }
        });

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break Some(status);
            }
            if Instant::now() >= deadline {
                break None;
            }
            thread::sleep(Duration::from_millis(2));
        };
        let status = match status {
            Some(s) => s,
            None => {
                kill_tree(&mut child);
                let _ = child.wait();
                // descendants may still hold the pipes; the I/O threads are detached
                drop((writer, reader));
                return Ok(Outcome::Timeout);
            }
        };
        let _ = writer.join();
        let (out, overflow) = reader.join().unwrap_or_default();
        if overflow {
            return Ok(Outcome::RuntimeError(format!("output exceeded {cap} bytes")));
        }
        if !status.success() {
            return Ok(Outcome::RuntimeError(format!("process exited with {status}")));
        }
        Ok(Outcome::Completed(String::from_utf8_lossy(&out).into_owned()))
    }
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // the child leads its own process group
        let pgid = child.id() as libc::pid_t;
        unsafe {
            libc::kill(-pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

impl Runner for SubprocessRunner {
    fn language(&self) -> LanguageTag {
        LanguageTag::External
    }

    fn execute(&self, program: &str, input: &str) -> Outcome {
        self.run_process(program, input)
            .unwrap_or_else(|e| Outcome::RuntimeError(format!("spawn failed: {e}")))
    }
}
