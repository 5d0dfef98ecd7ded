//! Line-oriented bridge to a model running in a child process.
//!
//! Each batch is written as CSV rows (one masked instance per line) followed
//! by an empty line. The child answers with exactly one decimal prediction
//! per input row, one per line.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use super::{Model, ModelError, Rows};
use crate::error::{Error, Result};

struct Bridge {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    batches: usize,
}

pub struct ExternalModel {
    n_features: usize,
    command: Vec<String>,
    bridge: Mutex<Bridge>,
}

impl ExternalModel {
    pub fn spawn(command: &[String], n_features: usize) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::InvalidInput("external model command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Model {
                batch: 0,
                message: format!("cannot start {program:?}: {e}"),
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            n_features,
            command: command.to_vec(),
            bridge: Mutex::new(Bridge {
                child,
                stdin,
                stdout,
                batches: 0,
            }),
        })
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }
}

impl Bridge {
    fn exit_note(&mut self) -> String {
        match self.child.try_wait() {
            Ok(Some(status)) => format!(" (process exited with {status})"),
            _ => String::new(),
        }
    }

    fn round_trip(&mut self, rows: Rows<'_>) -> std::result::Result<Vec<f64>, String> {
        let mut payload = String::with_capacity(rows.len() * rows.width() * 20);
        for row in rows.iter() {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    payload.push(',');
                }
                // shortest representation that round-trips exactly
                payload.push_str(&format!("{v:?}"));
            }
            payload.push('\n');
        }
        payload.push('\n');
        self.stdin
            .write_all(payload.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| format!("write failed: {e}"))?;

        let mut out = Vec::with_capacity(rows.len());
        let mut line = String::new();
        for i in 0..rows.len() {
            line.clear();
            let n = self
                .stdout
                .read_line(&mut line)
                .map_err(|e| format!("read failed: {e}"))?;
            if n == 0 {
                return Err(format!(
                    "unexpected end of output after {i} of {} predictions",
                    rows.len()
                ));
            }
            let text = line.trim();
            let v: f64 = text
                .parse()
                .map_err(|_| format!("malformed prediction {text:?} on reply line {}", i + 1))?;
            out.push(v);
        }
        Ok(out)
    }
}

impl Model for ExternalModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, rows: Rows<'_>) -> std::result::Result<Vec<f64>, ModelError> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let mut bridge = self
            .bridge
            .lock()
            .map_err(|_| ModelError("external model bridge poisoned by an earlier failure".into()))?;
        let batch = bridge.batches;
        bridge.batches += 1;
        bridge.round_trip(rows).map_err(|msg| {
            let note = bridge.exit_note();
            ModelError(format!("external batch {batch}: {msg}{note}"))
        })
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        if let Ok(bridge) = self.bridge.get_mut() {
            let _ = bridge.child.kill();
            let _ = bridge.child.wait();
        }
    }
}
