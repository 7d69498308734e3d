// SPDX-License-Identifier: Apache-2.0

//! Coverage bookkeeping and the iterative generation loop.
//!
//! Each round clusters and maps every live assertion, computes per-sub-spec
//! functional point coverage, and, while some sub-spec sits below the
//! threshold, asks a generator for assertions targeting the uncovered
//! points.

mod generator;
mod run;

pub use generator::{synthesize_sva, ExternalCommand, Generator, GeneratorError, Synthetic, SyntheticMode};
pub use run::{run_loop, LoopError, LoopInputs, LoopOutcome, RoundRecord};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::{render, PromptSet};
use crate::spec::SubSpec;
use crate::sva::ParsedAssertion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoiCoverage {
    pub assertion_id: String,
    pub bfc: f64,
    pub sfc: f64,
    pub tfc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpvVerdict {
    pub assertion_id: String,
    #[serde(rename = "passed", alias = "fpv_passed")]
    pub fpv_passed: bool,
}

/// On-disk coverage report of an external formal tool run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageReport {
    #[serde(default)]
    pub coi: Vec<CoiCoverage>,
    #[serde(default)]
    pub fpv: Vec<FpvVerdict>,
}

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{assertion_id}: {metric} = {value} is outside [0, 1]")]
    Range {
        assertion_id: String,
        metric: &'static str,
        value: f64,
    },
}

/// Records of a coverage report; entries naming unknown assertions are
/// dropped and listed in `unknown_ids`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestedCoverage {
    pub coi: Vec<CoiCoverage>,
    pub fpv: Vec<FpvVerdict>,
    pub unknown_ids: Vec<String>,
}

fn check_ranges(report: &CoverageReport) -> Result<(), CoverageError> {
    for c in &report.coi {
        for (metric, value) in [("bfc", c.bfc), ("sfc", c.sfc), ("tfc", c.tfc)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(CoverageError::Range {
                    assertion_id: c.assertion_id.clone(),
                    metric,
                    value,
                });
            }
        }
    }
    Ok(())
}

pub fn parse_coverage(text: &str, known: &BTreeSet<String>) -> Result<IngestedCoverage, CoverageError> {
    let report: CoverageReport = serde_json::from_str(text).map_err(|e| CoverageError::Schema {
        path: "<coverage>".into(),
        message: e.to_string(),
    })?;
    check_ranges(&report)?;
    let mut unknown = BTreeSet::new();
    let mut keep = |id: &str| {
        let ok = known.contains(id);
        if !ok {
            unknown.insert(id.to_string());
        }
        ok
    };
    let coi = report.coi.into_iter().filter(|c| keep(&c.assertion_id)).collect();
    let fpv = report.fpv.into_iter().filter(|v| keep(&v.assertion_id)).collect();
    for id in &unknown {
        log::warn!("coverage report names unknown assertion {id:?}; dropped");
    }
    Ok(IngestedCoverage {
        coi,
        fpv,
        unknown_ids: unknown.into_iter().collect(),
    })
}

pub fn ingest_coverage(path: &Path, known: &BTreeSet<String>) -> Result<IngestedCoverage, CoverageError> {
    let text = std::fs::read_to_string(path).map_err(|source| CoverageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_coverage(&text, known).map_err(|e| match e {
        CoverageError::Schema { message, .. } => CoverageError::Schema {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n_total: usize,
    pub n_syntax: usize,
    pub n_fpv: usize,
    /// Means over assertions with a coverage record; absent when none has one.
    pub bfc: Option<f64>,
    pub sfc: Option<f64>,
    pub tfc: Option<f64>,
}

impl RunMetrics {
    /// `N/S/P`.
    pub fn nsp_string(&self) -> String {
        format!("{}/{}/{}", self.n_total, self.n_syntax, self.n_fpv)
    }
}

/// N counts all assertions, S the syntax-correct ones, P those that are
/// syntax-correct and passed FPV. For repeated records the last one wins.
pub fn compute_metrics(
    assertions: &[ParsedAssertion],
    verdicts: &[FpvVerdict],
    coverages: &[CoiCoverage],
) -> RunMetrics {
    let passed: BTreeMap<&str, bool> = verdicts
        .iter()
        .map(|v| (v.assertion_id.as_str(), v.fpv_passed))
        .collect();
    let cov: BTreeMap<&str, &CoiCoverage> = coverages.iter().map(|c| (c.assertion_id.as_str(), c)).collect();
    let n_syntax = assertions.iter().filter(|a| a.syntax_ok).count();
    let n_fpv = assertions
        .iter()
        .filter(|a| a.syntax_ok && passed.get(a.assertion_id.as_str()) == Some(&true))
        .count();
    let with_cov: Vec<&CoiCoverage> = assertions
        .iter()
        .filter_map(|a| cov.get(a.assertion_id.as_str()).copied())
        .collect();
    let mean = |f: fn(&CoiCoverage) -> f64| -> Option<f64> {
        (!with_cov.is_empty()).then(|| with_cov.iter().map(|c| f(c)).sum::<f64>() / with_cov.len() as f64)
    };
    RunMetrics {
        n_total: assertions.len(),
        n_syntax,
        n_fpv,
        bfc: mean(|c| c.bfc),
        sfc: mean(|c| c.sfc),
        tfc: mean(|c| c.tfc),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationState {
    pub round: u32,
    pub alive_assertions: BTreeSet<String>,
    pub coverage_by_subspec: BTreeMap<String, f64>,
    pub covered_points: Vec<String>,
    pub uncovered_points: Vec<String>,
    pub converged: bool,
    pub theta: f64,
    pub max_rounds: u32,
}

impl IterationState {
    /// State for `subspecs` given the set of covered point ids.
    pub fn new(
        round: u32,
        alive_assertions: BTreeSet<String>,
        subspecs: &[SubSpec],
        covered: &BTreeSet<String>,
        theta: f64,
        max_rounds: u32,
    ) -> IterationState {
        let mut coverage_by_subspec = BTreeMap::new();
        let mut covered_points = Vec::new();
        let mut uncovered_points = Vec::new();
        for s in subspecs {
            let hit = s.points.iter().filter(|p| covered.contains(&p.point_id)).count();
            let ratio = if s.points.is_empty() {
                1.0
            } else {
                hit as f64 / s.points.len() as f64
            };
            coverage_by_subspec.insert(s.subspec_id.clone(), ratio);
            for p in &s.points {
                if covered.contains(&p.point_id) {
                    covered_points.push(p.point_id.clone());
                } else {
                    uncovered_points.push(p.point_id.clone());
                }
            }
        }
        let converged = coverage_by_subspec.values().all(|&r| r >= theta);
        IterationState {
            round,
            alive_assertions,
            coverage_by_subspec,
            covered_points,
            uncovered_points,
            converged,
            theta,
            max_rounds,
        }
    }

    /// Covered points over all points; 1 when there are no points.
    pub fn aggregate_coverage(&self) -> f64 {
        let total = self.covered_points.len() + self.uncovered_points.len();
        if total == 0 {
            1.0
        } else {
            self.covered_points.len() as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRef {
    pub point_id: String,
    pub statement: String,
    pub signals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackItem {
    pub subspec_id: String,
    pub title: String,
    pub coverage_ratio: f64,
    pub subspec_excerpt: String,
    pub uncovered_points: Vec<PointRef>,
    pub covered_statements: Vec<String>,
    pub signals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPayload {
    pub round: u32,
    pub items: Vec<FeedbackItem>,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("every sub-spec already meets the coverage threshold")]
pub struct AlreadyConverged;

const EXCERPT_CHARS: usize = 600;

fn excerpt(body: &str) -> String {
    let flat = crate::spec::normalize_whitespace(body);
    if flat.chars().count() <= EXCERPT_CHARS {
        return flat;
    }
    let cut: String = flat.chars().take(EXCERPT_CHARS).collect();
    format!("{cut}...")
}

fn render_items(items: &[FeedbackItem]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&format!(
            "## {} {} (coverage {:.2})\nExcerpt: {}\nSignals: {}\nUncovered points:\n",
            item.subspec_id,
            item.title,
            item.coverage_ratio,
            item.subspec_excerpt,
            item.signals.join(", ")
        ));
        for p in &item.uncovered_points {
            out.push_str(&format!("- [{}] {}\n", p.point_id, p.statement));
        }
        if !item.covered_statements.is_empty() {
            out.push_str("Already covered:\n");
            for s in &item.covered_statements {
                out.push_str(&format!("- {s}\n"));
            }
        }
        out.push('\n');
    }
    out
}

/// One item per sub-spec below the threshold, least covered first (document
/// order among equal ratios).
pub fn build_feedback(
    state: &IterationState,
    subspecs: &[SubSpec],
    prompts: &PromptSet,
) -> Result<FeedbackPayload, AlreadyConverged> {
    if state.converged {
        return Err(AlreadyConverged);
    }
    let uncovered: BTreeSet<&str> = state.uncovered_points.iter().map(String::as_str).collect();
    let mut items: Vec<FeedbackItem> = subspecs
        .iter()
        .filter_map(|s| {
            let ratio = *state.coverage_by_subspec.get(&s.subspec_id)?;
            if ratio >= state.theta {
                return None;
            }
            let (open, done): (Vec<_>, Vec<_>) = s.points.iter().partition(|p| uncovered.contains(p.point_id.as_str()));
            let signals: BTreeSet<String> = open.iter().flat_map(|p| p.signals.iter().cloned()).collect();
            Some(FeedbackItem {
                subspec_id: s.subspec_id.clone(),
                title: s.title.clone(),
                coverage_ratio: ratio,
                subspec_excerpt: excerpt(&s.body),
                uncovered_points: open
                    .iter()
                    .map(|p| PointRef {
                        point_id: p.point_id.clone(),
                        statement: p.statement.clone(),
                        signals: p.signals.clone(),
                    })
                    .collect(),
                covered_statements: done.iter().map(|p| p.statement.clone()).collect(),
                signals: signals.into_iter().collect(),
            })
        })
        .collect();
    items.sort_by(|a, b| a.coverage_ratio.total_cmp(&b.coverage_ratio));
    let prompt = render(
        &prompts.feedback,
        &[("ROUND", &state.round.to_string()), ("ITEMS", &render_items(&items))],
    );
    Ok(FeedbackPayload {
        round: state.round,
        items,
        prompt,
    })
}
