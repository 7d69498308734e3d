// SPDX-License-Identifier: Apache-2.0

//! Assertion generators driven by feedback payloads.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::FeedbackPayload;
use crate::sva::source::RawAssertion;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("could not start generator: {0}")]
    Spawn(std::io::Error),
    #[error("generator timed out after {0:?}")]
    Timeout(Duration),
    #[error("generator exited with {status}: {stderr}")]
    Failed { status: String, stderr: String },
    #[error("generator output is not a JSON array of {{id, sva}}: {0}")]
    Output(String),
    #[error("generator I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub trait Generator {
    fn generate(&mut self, payload: &FeedbackPayload) -> Result<Vec<RawAssertion>, GeneratorError>;
}

/// Runs a shell command per round: the payload JSON goes to standard input,
/// a JSON array of `{id, sva}` is expected on standard output.
#[derive(Debug, Clone)]
pub struct ExternalCommand {
    pub command: String,
    pub timeout: Duration,
}

impl ExternalCommand {
    pub fn new(command: impl Into<String>, timeout: Duration) -> ExternalCommand {
        ExternalCommand {
            command: command.into(),
            timeout,
        }
    }
}

fn drain<R: Read + Send + 'static>(mut r: R) -> std::thread::JoinHandle<Vec<u8>> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        buf
    })
}

impl Generator for ExternalCommand {
    fn generate(&mut self, payload: &FeedbackPayload) -> Result<Vec<RawAssertion>, GeneratorError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(GeneratorError::Spawn)?;
        let input = serde_json::to_vec(payload).expect("payload serializes");
        let mut stdin = child.stdin.take().expect("stdin piped");
        let writer = std::thread::spawn(move || {
            // A generator may exit without reading its input; that is not an error here.
            let _ = stdin.write_all(&input);
        });
        let out = drain(child.stdout.take().expect("stdout piped"));
        let err = drain(child.stderr.take().expect("stderr piped"));

        let start = Instant::now();
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if start.elapsed() >= self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Err(GeneratorError::Timeout(self.timeout));
            }
            std::thread::sleep(Duration::from_millis(10));
        };
        let _ = writer.join();
        let stdout = out.join().unwrap_or_default();
        let stderr = err.join().unwrap_or_default();
        if !status.success() {
            return Err(GeneratorError::Failed {
                status: status.to_string(),
                stderr: String::from_utf8_lossy(&stderr).trim().to_string(),
            });
        }
        serde_json::from_slice(&stdout).map_err(|e| GeneratorError::Output(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticMode {
    /// One matching assertion per uncovered point.
    Perfect,
    /// A matching assertion for the first uncovered point of the worst
    /// sub-spec only.
    OnePerRound,
    /// The first uncovered point of each listed sub-spec, plus one
    /// syntactically broken assertion.
    Imperfect,
    /// Nothing.
    Silent,
}

impl std::str::FromStr for SyntheticMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perfect" => Ok(SyntheticMode::Perfect),
            "one-per-round" => Ok(SyntheticMode::OnePerRound),
            "imperfect" => Ok(SyntheticMode::Imperfect),
            "silent" => Ok(SyntheticMode::Silent),
            other => Err(format!(
                "unknown synthetic generator {other:?} (expected perfect, one-per-round, imperfect or silent)"
            )),
        }
    }
}

/// Scripted offline generator for tests and demos.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub mode: SyntheticMode,
}

impl Synthetic {
    pub fn new(mode: SyntheticMode) -> Synthetic {
        Synthetic { mode }
    }
}

/// An unclocked assertion whose signal set is exactly `signals`:
/// `s1 |-> ##1 (s2 && ...)`, or just `s1` for a single signal.
pub fn synthesize_sva(signals: &[String]) -> Option<String> {
    match signals {
        [] => None,
        [only] => Some(format!("assert property ({only});")),
        [first, rest @ ..] => Some(format!("assert property ({first} |-> ##1 ({}));", rest.join(" && "))),
    }
}

impl Generator for Synthetic {
    fn generate(&mut self, payload: &FeedbackPayload) -> Result<Vec<RawAssertion>, GeneratorError> {
        let targets: Vec<&super::PointRef> = match self.mode {
            SyntheticMode::Perfect => payload.items.iter().flat_map(|i| &i.uncovered_points).collect(),
            SyntheticMode::OnePerRound => payload
                .items
                .iter()
                .flat_map(|i| i.uncovered_points.first())
                .take(1)
                .collect(),
            SyntheticMode::Imperfect => payload
                .items
                .iter()
                .filter_map(|i| i.uncovered_points.first())
                .collect(),
            SyntheticMode::Silent => Vec::new(),
        };
        let mut out: Vec<RawAssertion> = targets
            .iter()
            .filter_map(|p| synthesize_sva(&p.signals))
            .enumerate()
            .map(|(n, sva)| RawAssertion {
                id: format!("g{}_{}", payload.round + 1, n + 1),
                sva,
            })
            .collect();
        if self.mode == SyntheticMode::Imperfect {
            out.push(RawAssertion {
                id: format!("g{}_bad", payload.round + 1),
                sva: "assert property (@(posedge clk) |-> );".to_string(),
            });
        }
        Ok(out)
    }
}
