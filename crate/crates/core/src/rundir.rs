// SPDX-License-Identifier: Apache-2.0

//! Run directories and the per-round report.
//!
//! Layout:
//!
//! ```text
//! <run>/manifest.json
//! <run>/round<k>/{parsed,sem,struct,groups,mapping,feedback,metrics}.json
//! ```
//!
//! Round files depend only on the inputs and the configuration, so two runs
//! over the same inputs produce identical round folders. `manifest.json`
//! additionally carries a creation timestamp.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::Config;
use crate::feedback::{IterationState, LoopOutcome, RunMetrics};

#[derive(Debug, Error)]
pub enum RunDirError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunDirError + '_ {
    move |source| RunDirError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: Config,
    pub inputs: BTreeMap<String, InputHash>,
    pub rounds: usize,
    pub converged: bool,
    pub created_at: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<InputHash, RunDirError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(InputHash {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetricsFile {
    pub round: u32,
    pub metrics: RunMetrics,
    pub state: IterationState,
    pub fp_coverage: f64,
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), RunDirError> {
    let text = serde_json::to_string_pretty(value).expect("run data serializes");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, RunDirError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| RunDirError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn round_dir(run: &Path, round: u32) -> PathBuf {
    run.join(format!("round{round}"))
}

/// Writes every round of `outcome` and then the manifest.
pub fn write_run(run: &Path, outcome: &LoopOutcome, manifest: &Manifest) -> Result<(), RunDirError> {
    std::fs::create_dir_all(run).map_err(io_err(run))?;
    for r in &outcome.rounds {
        let dir = round_dir(run, r.round);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_json(&dir.join("parsed.json"), &r.parsed)?;
        write_json(&dir.join("sem.json"), &r.sem)?;
        write_json(&dir.join("struct.json"), &r.structural)?;
        write_json(&dir.join("groups.json"), &r.groups)?;
        write_json(&dir.join("mapping.json"), &r.mapping)?;
        write_json(&dir.join("feedback.json"), &r.feedback)?;
        write_json(
            &dir.join("metrics.json"),
            &RoundMetricsFile {
                round: r.round,
                metrics: r.metrics.clone(),
                state: r.state.clone(),
                fp_coverage: r.state.aggregate_coverage(),
            },
        )?;
    }
    write_json(&run.join("manifest.json"), manifest)
}

pub fn read_manifest(run: &Path) -> Result<Manifest, RunDirError> {
    read_json(&run.join("manifest.json"))
}

/// Metrics of every round recorded in `run`, in round order.
pub fn read_rounds(run: &Path) -> Result<Vec<RoundMetricsFile>, RunDirError> {
    let manifest = read_manifest(run)?;
    (0..manifest.rounds)
        .map(|k| read_json(&round_dir(run, k as u32).join("metrics.json")))
        .collect()
}

/// One report line: funnel counts, COI coverage and functional point
/// coverage per sub-spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub round: u32,
    pub nsp: String,
    pub bfc_pct: Option<f64>,
    pub sfc_pct: Option<f64>,
    pub tfc_pct: Option<f64>,
    pub fp_coverage: f64,
    pub subspec_ratios: BTreeMap<String, f64>,
    pub converged: bool,
}

impl From<&RoundMetricsFile> for ReportRow {
    fn from(r: &RoundMetricsFile) -> Self {
        let pct = |x: Option<f64>| x.map(|v| v * 100.0);
        ReportRow {
            round: r.round,
            nsp: r.metrics.nsp_string(),
            bfc_pct: pct(r.metrics.bfc),
            sfc_pct: pct(r.metrics.sfc),
            tfc_pct: pct(r.metrics.tfc),
            fp_coverage: r.fp_coverage,
            subspec_ratios: r.state.coverage_by_subspec.clone(),
            converged: r.state.converged,
        }
    }
}

pub fn report_rows(rounds: &[RoundMetricsFile]) -> Vec<ReportRow> {
    rounds.iter().map(ReportRow::from).collect()
}

fn pct_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Fixed-width table, one row per round.
pub fn render_table(rows: &[ReportRow]) -> String {
    let subspecs: Vec<&String> = rows
        .first()
        .map(|r| r.subspec_ratios.keys().collect())
        .unwrap_or_default();
    let nsp_width = rows.iter().map(|r| r.nsp.len()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<6} {:<w$} {:>7} {:>7} {:>7} {:>7}",
        "round",
        "N/S/P",
        "BFC%",
        "SFC%",
        "TFC%",
        "FP-cov",
        w = nsp_width
    );
    for s in &subspecs {
        out.push_str(&format!(" {s:>6}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{:<6} {:<w$} {:>7} {:>7} {:>7} {:>7.3}",
            r.round,
            r.nsp,
            pct_cell(r.bfc_pct),
            pct_cell(r.sfc_pct),
            pct_cell(r.tfc_pct),
            r.fp_coverage,
            w = nsp_width
        ));
        for s in &subspecs {
            let cell = r
                .subspec_ratios
                .get(*s)
                .map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
            out.push_str(&format!(" {cell:>6}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn row(n: usize, s: usize, p: usize) -> RoundMetricsFile {
        RoundMetricsFile {
            round: 0,
            metrics: RunMetrics {
                n_total: n,
                n_syntax: s,
                n_fpv: p,
                bfc: Some(0.5),
                sfc: None,
                tfc: Some(1.0),
            },
            state: IterationState {
                round: 0,
                alive_assertions: BTreeSet::new(),
                coverage_by_subspec: BTreeMap::from([("s1".into(), 0.85), ("s2".into(), 1.0)]),
                covered_points: vec![],
                uncovered_points: vec![],
                converged: true,
                theta: 0.85,
                max_rounds: 5,
            },
            fp_coverage: 0.9,
        }
    }

    #[test]
    fn table_layout() {
        let table = render_table(&report_rows(&[row(127, 112, 58)]));
        let lines: Vec<_> = table.lines().collect();
        assert!(lines[0].starts_with("round  N/S/P"));
        assert!(lines[0].ends_with("s1     s2"));
        assert!(lines[1].contains("127/112/58"));
        assert!(lines[1].contains("50.00"));
        assert!(lines[1].contains("  -"));
        assert!(lines[1].ends_with("0.85   1.00"));
    }

    #[test]
    fn sha256_reference() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
