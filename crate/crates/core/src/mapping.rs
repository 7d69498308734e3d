// SPDX-License-Identifier: Apache-2.0

//! Assertion group to sub-spec mapping and point alignment.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clustering::AssertionGroup;
use crate::error::ArgumentError;
use crate::parallel::Execution;
use crate::semantic::{cosine_similarity, SemanticRecord};
use crate::spec::SubSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub w_sig: f64,
    pub w_sem: f64,
    pub tau_map: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        MappingConfig {
            w_sig: 0.5,
            w_sem: 0.5,
            tau_map: 0.60,
        }
    }
}

impl MappingConfig {
    pub fn validate(&self) -> Result<(), ArgumentError> {
        if !(self.w_sig >= 0.0 && self.w_sem >= 0.0 && self.w_sig + self.w_sem > 0.0) {
            return Err(ArgumentError::new("mapping weights must be >= 0 with a positive sum"));
        }
        if self.tau_map.is_nan() {
            return Err(ArgumentError::new("tau_map must be a number"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMapping {
    pub group_id: usize,
    pub subspec_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAlignment {
    pub assertion_id: String,
    pub point_id: String,
    pub signal_jaccard: f64,
    pub semantic_sim: f64,
    pub combined: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSpecCoverage {
    pub subspec_id: String,
    pub covered: usize,
    pub total: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingOutput {
    pub group_mappings: Vec<GroupMapping>,
    pub point_alignments: Vec<PointAlignment>,
    pub coverage_table: Vec<SubSpecCoverage>,
}

/// `|a ∩ b| / |a ∪ b|`, 0 when both are empty.
pub fn jaccard<S: AsRef<str> + Ord>(a: &[S], b: &[S]) -> f64 {
    let a: BTreeSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: BTreeSet<&str> = b.iter().map(AsRef::as_ref).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

fn cosine_or_zero(u: &[f64], v: &[f64]) -> f64 {
    cosine_similarity(u, v).unwrap_or(0.0)
}

fn mean(vectors: &[&[f64]]) -> Vec<f64> {
    let dim = vectors.first().map_or(0, |v| v.len());
    let mut out = vec![0.0; dim];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= vectors.len() as f64);
    out
}

/// `cosine(mean member embedding, subspec embedding) + jaccard(group
/// signals, subspec signals)`.
pub fn group_score(member_embeddings: &[&[f64]], group_signals: &[String], sub: &SubSpec) -> f64 {
    cosine_or_zero(&mean(member_embeddings), &sub.embedding) + jaccard(group_signals, &sub.signals_mentioned)
}

/// Maps every group to its best-scoring sub-spec; ties go to the smallest
/// subspec_id. `signals` gives each assertion's signal set.
pub fn map_groups(
    groups: &[AssertionGroup],
    subspecs: &[SubSpec],
    sems: &[SemanticRecord],
    signals: &BTreeMap<String, Vec<String>>,
) -> Result<Vec<GroupMapping>, ArgumentError> {
    if subspecs.is_empty() {
        return Err(ArgumentError::new("no sub-specs to map onto"));
    }
    let by_id: BTreeMap<&str, &SemanticRecord> = sems.iter().map(|r| (r.assertion_id.as_str(), r)).collect();
    groups
        .iter()
        .map(|g| {
            let mut embeddings = Vec::with_capacity(g.member_ids.len());
            let mut union = BTreeSet::new();
            for id in &g.member_ids {
                let rec = by_id
                    .get(id.as_str())
                    .ok_or_else(|| ArgumentError::new(format!("no semantic record for {id:?}")))?;
                embeddings.push(rec.embedding.as_slice());
                union.extend(signals.get(id).into_iter().flatten().cloned());
            }
            let union: Vec<String> = union.into_iter().collect();
            let mut best: Option<(f64, &str)> = None;
            for s in subspecs {
                let score = group_score(&embeddings, &union, s);
                let better = match best {
                    None => true,
                    Some((b, id)) => score > b || (score == b && s.subspec_id.as_str() < id),
                };
                if better {
                    best = Some((score, &s.subspec_id));
                }
            }
            let (score, sid) = best.expect("subspecs is non-empty");
            Ok(GroupMapping {
                group_id: g.group_id,
                subspec_id: sid.to_string(),
                score,
            })
        })
        .collect()
}

/// `(w_sig·jaccard + w_sem·(sim+1)/2) / (w_sig + w_sem)`.
pub fn combined_score(jaccard: f64, sim: f64, cfg: &MappingConfig) -> f64 {
    (cfg.w_sig * jaccard + cfg.w_sem * ((sim + 1.0) / 2.0)) / (cfg.w_sig + cfg.w_sem)
}

/// Scores one assertion against every point of `sub`.
pub fn align_points(
    signals: &[String],
    record: &SemanticRecord,
    sub: &SubSpec,
    cfg: &MappingConfig,
) -> Vec<PointAlignment> {
    sub.points
        .iter()
        .map(|p| {
            let signal_jaccard = jaccard(signals, &p.signals);
            let semantic_sim = cosine_or_zero(&record.embedding, &p.embedding);
            let combined = combined_score(signal_jaccard, semantic_sim, cfg);
            PointAlignment {
                assertion_id: record.assertion_id.clone(),
                point_id: p.point_id.clone(),
                signal_jaccard,
                semantic_sim,
                combined,
                accepted: combined >= cfg.tau_map,
            }
        })
        .collect()
}

/// A point is covered once any accepted alignment targets it; a sub-spec
/// without points counts as fully covered.
pub fn coverage_table(subspecs: &[SubSpec], alignments: &[PointAlignment]) -> Vec<SubSpecCoverage> {
    let covered: BTreeSet<&str> = alignments
        .iter()
        .filter(|a| a.accepted)
        .map(|a| a.point_id.as_str())
        .collect();
    subspecs
        .iter()
        .map(|s| {
            let total = s.points.len();
            let hit = s
                .points
                .iter()
                .filter(|p| covered.contains(p.point_id.as_str()))
                .count();
            SubSpecCoverage {
                subspec_id: s.subspec_id.clone(),
                covered: hit,
                total,
                ratio: if total == 0 { 1.0 } else { hit as f64 / total as f64 },
            }
        })
        .collect()
}

/// Full mapping pass: groups to sub-specs, then every grouped assertion to
/// the points of its group's sub-spec. Alignments are ordered by
/// assertion id, then point order.
pub fn map_all(
    groups: &[AssertionGroup],
    subspecs: &[SubSpec],
    sems: &[SemanticRecord],
    signals: &BTreeMap<String, Vec<String>>,
    cfg: &MappingConfig,
    exec: Execution,
) -> Result<MappingOutput, ArgumentError> {
    cfg.validate()?;
    let group_mappings = map_groups(groups, subspecs, sems, signals)?;
    let sub_by_id: BTreeMap<&str, &SubSpec> = subspecs.iter().map(|s| (s.subspec_id.as_str(), s)).collect();
    let sem_by_id: BTreeMap<&str, &SemanticRecord> = sems.iter().map(|r| (r.assertion_id.as_str(), r)).collect();
    let mut work: Vec<(&str, &SubSpec)> = Vec::new();
    for (g, m) in groups.iter().zip(&group_mappings) {
        let sub = sub_by_id[m.subspec_id.as_str()];
        work.extend(g.member_ids.iter().map(|id| (id.as_str(), sub)));
    }
    work.sort_by(|a, b| a.0.cmp(b.0));
    let empty = Vec::new();
    let per_assertion = exec.map_slice(&work, |(id, sub)| {
        align_points(signals.get(*id).unwrap_or(&empty), sem_by_id[id], sub, cfg)
    });
    let point_alignments: Vec<PointAlignment> = per_assertion.into_iter().flatten().collect();
    let coverage_table = coverage_table(subspecs, &point_alignments);
    Ok(MappingOutput {
        group_mappings,
        point_alignments,
        coverage_table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::FunctionalPoint;

    fn sub(id: &str, emb: &[f64], signals: &[&str], points: usize) -> SubSpec {
        SubSpec {
            subspec_id: id.into(),
            title: id.into(),
            body: String::new(),
            signals_mentioned: signals.iter().map(|s| s.to_string()).collect(),
            embedding: emb.to_vec(),
            points: (0..points)
                .map(|i| FunctionalPoint {
                    point_id: format!("{id}.p{}", i + 1),
                    subspec_id: id.into(),
                    statement: "x.".into(),
                    signals: signals.iter().map(|s| s.to_string()).collect(),
                    embedding: emb.to_vec(),
                })
                .collect(),
        }
    }

    fn rec(id: &str, emb: &[f64]) -> SemanticRecord {
        SemanticRecord {
            assertion_id: id.into(),
            intent_text: "i".into(),
            embedding: emb.to_vec(),
            backend_tag: "t".into(),
        }
    }

    fn group(id: usize, members: &[&str]) -> AssertionGroup {
        AssertionGroup {
            group_id: id,
            member_ids: members.iter().map(|s| s.to_string()).collect(),
            semantic_label: 0,
            fused_centroid: vec![],
        }
    }

    #[test]
    fn jaccard_cases() {
        let e: [&str; 0] = [];
        assert_eq!(jaccard(&e, &e), 0.0);
        assert_eq!(jaccard(&["a", "b"], &["b", "c"]), 1.0 / 3.0);
        assert_eq!(jaccard(&["a"], &["a"]), 1.0);
    }

    #[test]
    fn combined_extremes() {
        let cfg = MappingConfig::default();
        assert_eq!(combined_score(1.0, 1.0, &cfg), 1.0);
        assert_eq!(combined_score(0.0, 0.0, &cfg), 0.25);
        assert!(combined_score(0.0, 0.0, &cfg) < cfg.tau_map);
    }

    #[test]
    fn singleton_subspec_always_wins() {
        let subs = vec![sub("s1", &[0.0, 1.0], &["x"], 1)];
        let m = map_groups(&[group(0, &["a"])], &subs, &[rec("a", &[1.0, 0.0])], &BTreeMap::new()).unwrap();
        assert_eq!(m[0].subspec_id, "s1");
        assert_eq!(m[0].score, 0.0);
    }

    #[test]
    fn signal_overlap_decides_with_uniform_embeddings() {
        let e = [1.0, 0.0];
        let subs = vec![sub("s1", &e, &["p", "q"], 1), sub("s2", &e, &["x", "y"], 1)];
        let signals = BTreeMap::from([("a".to_string(), vec!["x".to_string(), "y".to_string()])]);
        let m = map_groups(&[group(0, &["a"])], &subs, &[rec("a", &e)], &signals).unwrap();
        assert_eq!(m[0].subspec_id, "s2");
        assert_eq!(m[0].score, 2.0);
    }

    #[test]
    fn ties_go_to_smallest_id_regardless_of_order() {
        let e = [1.0, 0.0];
        let subs = vec![sub("s2", &e, &[], 0), sub("s1", &e, &[], 0)];
        let m = map_groups(&[group(0, &["a"])], &subs, &[rec("a", &e)], &BTreeMap::new()).unwrap();
        assert_eq!(m[0].subspec_id, "s1");
    }

    #[test]
    fn coverage_ratios() {
        let mut subs = vec![sub("s1", &[1.0], &[], 20), sub("s2", &[1.0], &[], 0)];
        let mk = |n: usize| -> Vec<PointAlignment> {
            (0..n)
                .map(|i| PointAlignment {
                    assertion_id: "a".into(),
                    point_id: format!("s1.p{}", i + 1),
                    signal_jaccard: 1.0,
                    semantic_sim: 1.0,
                    combined: 1.0,
                    accepted: true,
                })
                .collect()
        };
        let t = coverage_table(&subs, &mk(17));
        assert_eq!(t[0].ratio, 0.85);
        assert!(t[0].ratio >= 0.85);
        assert_eq!(t[1].ratio, 1.0);
        let t = coverage_table(&subs, &mk(16));
        assert_eq!(t[0].ratio, 0.80);
        subs.truncate(1);
        let mut rejected = mk(1);
        rejected[0].accepted = false;
        assert_eq!(coverage_table(&subs, &rejected)[0].covered, 0);
    }

    #[test]
    fn map_all_restricts_to_mapped_subspec() {
        let subs = vec![sub("s1", &[1.0, 0.0], &["x"], 2), sub("s2", &[0.0, 1.0], &["y"], 1)];
        let sems = vec![rec("a2", &[1.0, 0.0]), rec("a1", &[1.0, 0.0])];
        let signals = BTreeMap::from([
            ("a1".to_string(), vec!["x".to_string()]),
            ("a2".to_string(), vec!["x".to_string()]),
        ]);
        let out = map_all(
            &[group(0, &["a1", "a2"])],
            &subs,
            &sems,
            &signals,
            &MappingConfig::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(out.point_alignments.len(), 4);
        assert_eq!(out.point_alignments[0].assertion_id, "a1");
        assert!(out.point_alignments.iter().all(|a| a.point_id.starts_with("s1.")));
        assert_eq!(out.coverage_table[0].ratio, 1.0);
        assert_eq!(out.coverage_table[1].ratio, 0.0);
    }
}
