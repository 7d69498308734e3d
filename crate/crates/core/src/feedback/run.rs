// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    build_feedback, compute_metrics, ingest_coverage, CoiCoverage, CoverageError, FeedbackPayload, FpvVerdict,
    Generator, GeneratorError, IterationState, RunMetrics,
};
use crate::clustering::{cluster_batch, AssertionGroup, ClusterError};
use crate::config::Config;
use crate::error::ArgumentError;
use crate::gateway::Gateway;
use crate::mapping::{map_all, MappingOutput};
use crate::prompts::PromptSet;
use crate::semantic::{semantic_records, SemanticError, SemanticRecord};
use crate::spec::{normalize_whitespace, SubSpec};
use crate::structural::{
    build_structural_vector, distance_matrix, pad_batch, StructuralBatch, StructuralError, UnpaddedStructure,
};
use crate::sva::source::RawAssertion;
use crate::sva::{parse_assertion, ParsedAssertion};

#[derive(Debug, Error)]
pub enum LoopError {
    #[error(transparent)]
    Argument(#[from] ArgumentError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Structural(#[from] StructuralError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error("round {round}: {source}")]
    Generator {
        round: u32,
        #[source]
        source: GeneratorError,
    },
}

#[derive(Debug, Clone)]
pub struct LoopInputs {
    pub subspecs: Vec<SubSpec>,
    pub seed: Vec<RawAssertion>,
    /// Directory holding optional `round<k>.json` coverage reports.
    pub coverage_dir: Option<PathBuf>,
}

/// Everything one round computed; written out as one run-directory folder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    /// Every assertion received so far, syntax failures included.
    pub parsed: Vec<ParsedAssertion>,
    pub sem: Vec<SemanticRecord>,
    pub structural: StructuralBatch,
    pub groups: Vec<AssertionGroup>,
    pub mapping: MappingOutput,
    pub state: IterationState,
    pub metrics: RunMetrics,
    pub feedback: Option<FeedbackPayload>,
    /// Generated assertions dropped as duplicates in this round's intake.
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub state: IterationState,
    pub rounds: Vec<RoundRecord>,
}

struct Pool {
    all: Vec<ParsedAssertion>,
    ids: BTreeSet<String>,
    texts: BTreeSet<String>,
    sem: BTreeMap<String, SemanticRecord>,
    structure: BTreeMap<String, UnpaddedStructure>,
    alive: Vec<String>,
}

impl Pool {
    /// Parses and admits `incoming`, dropping reused ids and repeated texts.
    /// Returns the admitted syntax-correct assertions and the dropped ids.
    fn intake(&mut self, incoming: &[RawAssertion]) -> Result<(Vec<ParsedAssertion>, Vec<String>), LoopError> {
        let mut fresh = Vec::new();
        let mut dropped = Vec::new();
        for raw in incoming {
            let text = normalize_whitespace(&raw.sva);
            if self.ids.contains(&raw.id) {
                log::warn!("dropping assertion {:?}: id already used", raw.id);
                dropped.push(raw.id.clone());
                continue;
            }
            if self.texts.contains(&text) {
                log::warn!("dropping assertion {:?}: duplicate text", raw.id);
                dropped.push(raw.id.clone());
                continue;
            }
            let pa = parse_assertion(&raw.id, &raw.sva)?;
            self.ids.insert(raw.id.clone());
            self.texts.insert(text);
            if pa.syntax_ok {
                self.alive.push(pa.assertion_id.clone());
                fresh.push(pa.clone());
            } else {
                log::info!("assertion {:?} failed the syntax gate", raw.id);
            }
            self.all.push(pa);
        }
        Ok((fresh, dropped))
    }
}

type RoundReport = (Vec<CoiCoverage>, Vec<FpvVerdict>);

fn round_coverage(inputs: &LoopInputs, round: u32, known: &BTreeSet<String>) -> Result<Option<RoundReport>, LoopError> {
    let Some(dir) = &inputs.coverage_dir else {
        return Ok(None);
    };
    let path = dir.join(format!("round{round}.json"));
    if !path.exists() {
        return Ok(None);
    }
    let c = ingest_coverage(&path, known)?;
    Ok(Some((c.coi, c.fpv)))
}

/// Runs rounds until every sub-spec reaches `theta` or `max_rounds`
/// feedback rounds have been spent. A point stays covered once any round
/// accepted an alignment for it, so per-sub-spec ratios never decrease.
pub fn run_loop(
    cfg: &Config,
    inputs: &LoopInputs,
    gateway: &Gateway,
    prompts: &PromptSet,
    generator: &mut dyn Generator,
) -> Result<LoopOutcome, LoopError> {
    cfg.validate()?;
    if inputs.subspecs.is_empty() {
        return Err(ArgumentError::new("the loop needs at least one sub-spec").into());
    }
    let exec = cfg.runtime.execution;
    let theta = cfg.loop_.theta;
    let max_rounds = cfg.loop_.max_rounds;
    let mut pool = Pool {
        all: Vec::new(),
        ids: BTreeSet::new(),
        texts: BTreeSet::new(),
        sem: BTreeMap::new(),
        structure: BTreeMap::new(),
        alive: Vec::new(),
    };
    let mut covered: BTreeSet<String> = BTreeSet::new();
    let mut coi: Vec<CoiCoverage> = Vec::new();
    let mut fpv: Vec<FpvVerdict> = Vec::new();
    let mut rounds = Vec::new();
    let mut incoming = inputs.seed.clone();
    let mut round = 0u32;

    loop {
        let (fresh, dropped) = pool.intake(&incoming)?;
        for rec in semantic_records(&fresh, gateway, prompts)? {
            pool.sem.insert(rec.assertion_id.clone(), rec);
        }
        for pa in &fresh {
            pool.structure
                .insert(pa.assertion_id.clone(), build_structural_vector(pa)?);
        }

        let sem: Vec<SemanticRecord> = pool.alive.iter().map(|id| pool.sem[id].clone()).collect();
        let (structural, groups) = if pool.alive.is_empty() {
            (StructuralBatch::default(), Vec::new())
        } else {
            let vectors = pad_batch(pool.alive.iter().map(|id| pool.structure[id].clone()).collect())?;
            let dist = distance_matrix(&vectors, &cfg.structural, exec)?;
            let clustered = cluster_batch(&sem, &vectors, &dist, &cfg.clustering, exec)?;
            (
                StructuralBatch {
                    vectors,
                    distance_matrix: dist,
                },
                clustered.groups,
            )
        };
        let signals: BTreeMap<String, Vec<String>> = pool
            .all
            .iter()
            .filter(|pa| pa.syntax_ok)
            .map(|pa| (pa.assertion_id.clone(), pa.signals.clone()))
            .collect();
        let mapping = map_all(&groups, &inputs.subspecs, &sem, &signals, &cfg.mapping, exec)?;
        covered.extend(
            mapping
                .point_alignments
                .iter()
                .filter(|a| a.accepted)
                .map(|a| a.point_id.clone()),
        );

        if let Some((c, v)) = round_coverage(inputs, round, &pool.ids)? {
            coi.extend(c);
            fpv.extend(v);
        }
        let metrics = compute_metrics(&pool.all, &fpv, &coi);
        let alive: BTreeSet<String> = pool.alive.iter().cloned().collect();
        let state = IterationState::new(round, alive, &inputs.subspecs, &covered, theta, max_rounds);
        log::info!(
            "round {round}: {} assertions, {} groups, coverage {:.3}",
            metrics.nsp_string(),
            groups.len(),
            state.aggregate_coverage()
        );

        let stop = state.converged || round >= max_rounds;
        let feedback = if stop {
            None
        } else {
            Some(build_feedback(&state, &inputs.subspecs, prompts).expect("state is not converged"))
        };
        rounds.push(RoundRecord {
            round,
            parsed: pool.all.clone(),
            sem,
            structural,
            groups,
            mapping,
            state: state.clone(),
            metrics,
            feedback: feedback.clone(),
            dropped,
        });
        let Some(payload) = feedback else {
            return Ok(LoopOutcome { state, rounds });
        };
        incoming = generator
            .generate(&payload)
            .map_err(|source| LoopError::Generator { round, source })?;
        round += 1;
    }
}
