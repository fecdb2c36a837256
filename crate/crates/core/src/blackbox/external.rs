//! Adapter for a predictor running in a child process.
//!
//! Line protocol over the child's stdin/stdout:
//!
//! ```text
//! parent: HELLO <p> <n_classes>      child: OK
//! parent: BATCH <k>                  child: k lines of n_classes probabilities
//!         k lines of p reals
//! parent: BYE
//! ```
//!
//! Values are comma-separated, formatted with shortest round-trip precision.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use ndarray::{Array2, ArrayView2};

use super::{check_batch, BlackBoxModel};
use crate::error::{Error, Result};

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Channel {
    fn send(&mut self, text: &str) -> Result<()> {
        self.stdin
            .write_all(text.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Protocol(format!("write failed: {e}")))
    }

    fn read_line(&mut self) -> Result<String> {
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Protocol(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(Error::Protocol("child closed its output".into()));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    }
}

pub struct ExternalModel {
    command: String,
    name: String,
    n_features: usize,
    n_classes: usize,
    channel: Mutex<Channel>,
}

impl std::fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalModel")
            .field("command", &self.command)
            .field("n_features", &self.n_features)
            .field("n_classes", &self.n_classes)
            .finish()
    }
}

impl ExternalModel {
    /// Launches `command` through `sh -c` and performs the handshake.
    pub fn spawn(command: &str, n_features: usize, n_classes: usize) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Protocol(format!("cannot launch {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut channel = Channel { child, stdin, stdout };
        channel.send(&format!("HELLO {n_features} {n_classes}\n"))?;
        let reply = channel.read_line()?;
        if reply.trim() != "OK" {
            return Err(Error::Protocol(format!("handshake expected OK, got {reply:?}")));
        }
        Ok(Self {
            command: command.to_string(),
            name: format!("external:{command}"),
            n_features,
            n_classes,
            channel: Mutex::new(channel),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

impl BlackBoxModel for ExternalModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_batch(self.n_features, x)?;
        let k = x.nrows();
        let mut out = Array2::zeros((k, self.n_classes));
        if k == 0 {
            return Ok(out);
        }
        let mut msg = format!("BATCH {k}\n");
        for row in x.outer_iter() {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    msg.push(',');
                }
                write!(msg, "{v:?}").expect("write to string");
            }
            msg.push('\n');
        }

        let mut ch = self
            .channel
            .lock()
            .map_err(|_| Error::Protocol("channel poisoned".into()))?;
        ch.send(&msg)?;
        for i in 0..k {
            let line = ch.read_line()?;
            let vals: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Protocol(format!("row {i}: cannot parse {line:?}")))?;
            if vals.len() != self.n_classes {
                return Err(Error::Protocol(format!(
                    "row {i}: expected {} probabilities, got {}",
                    self.n_classes,
                    vals.len()
                )));
            }
            let sum: f64 = vals.iter().sum();
            if vals.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Protocol(format!("row {i}: not a distribution: {line:?}")));
            }
            for (c, v) in vals.into_iter().enumerate() {
                out[[i, c]] = v;
            }
        }
        Ok(out)
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.send("BYE\n");
            let _ = ch.child.wait();
        }
    }
}
