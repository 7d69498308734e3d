// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use proptest::prelude::*;
use svacov_core::clustering::{cluster_batch, FusionConfig};
use svacov_core::mapping::{combined_score, coverage_table, jaccard, MappingConfig, PointAlignment};
use svacov_core::parallel::Execution;
use svacov_core::semantic::{cosine_similarity, SemanticRecord};
use svacov_core::spec::{FunctionalPoint, SubSpec};
use svacov_core::structural::{distance_matrix, pad_batch, structural_distance, StructuralWeights, UnpaddedStructure};

fn unpadded() -> impl Strategy<Value = Vec<UnpaddedStructure>> {
    proptest::collection::vec((proptest::collection::vec(1u32..16, 0..12), 0.0f64..8.0), 1..10).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (paths, lca))| UnpaddedStructure {
                assertion_id: format!("a{i:02}"),
                paths,
                avg_lca_distance: lca,
            })
            .collect()
    })
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, dim)
}

proptest! {
    #[test]
    fn structural_distance_is_a_pseudometric(batch in unpadded()) {
        let v = pad_batch(batch).unwrap();
        for a in &v {
            prop_assert_eq!(structural_distance(a, a).unwrap(), 0.0);
            for b in &v {
                let ab = structural_distance(a, b).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert!((ab - structural_distance(b, a).unwrap()).abs() <= 1e-12);
                for c in &v {
                    let bc = structural_distance(b, c).unwrap();
                    let ac = structural_distance(a, c).unwrap();
                    prop_assert!(ac <= ab + bc + 1e-9);
                }
            }
        }
    }

    #[test]
    fn padding_commutes_with_permutation(batch in unpadded(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let padded = pad_batch(batch.clone()).unwrap();
        let permuted = pad_batch(order.iter().map(|&i| batch[i].clone()).collect()).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(&permuted[k], &padded[i]);
        }
        let width = padded[0].path_vector.len();
        prop_assert!(padded.iter().all(|p| p.path_vector.len() == width));
        prop_assert!(padded.iter().zip(&batch).all(|(p, u)| p.raw_length == u.paths.len() && p.path_vector[..u.paths.len()] == u.paths[..]));
    }

    #[test]
    fn distance_matrix_is_symmetric_and_execution_independent(batch in unpadded()) {
        let v = pad_batch(batch).unwrap();
        let w = StructuralWeights::default();
        let seq = distance_matrix(&v, &w, Execution::Sequential).unwrap();
        let par = distance_matrix(&v, &w, Execution::Parallel).unwrap();
        prop_assert_eq!(&seq, &par);
        for i in 0..seq.len() {
            prop_assert_eq!(seq.get(i, i), 0.0);
            for j in 0..seq.len() {
                prop_assert_eq!(seq.get(i, j), seq.get(j, i));
            }
        }
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(u in vector(8), v in vector(8), scale in 0.1f64..10.0) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-6) && v.iter().any(|x| x.abs() > 1e-6));
        let uv = cosine_similarity(&u, &v).unwrap();
        prop_assert_eq!(uv, cosine_similarity(&v, &u).unwrap());
        prop_assert!((-1.0..=1.0).contains(&uv));
        let scaled: Vec<f64> = u.iter().map(|x| x * scale).collect();
        prop_assert!((cosine_similarity(&scaled, &v).unwrap() - uv).abs() <= 1e-12);
    }

    #[test]
    fn clustering_ignores_input_order(batch in unpadded(), embeddings in proptest::collection::vec(vector(6), 10), rot in 0usize..10) {
        let n = batch.len();
        let records: Vec<SemanticRecord> = (0..n)
            .map(|i| SemanticRecord {
                assertion_id: batch[i].assertion_id.clone(),
                intent_text: String::new(),
                embedding: embeddings[i].clone(),
                backend_tag: "t".into(),
            })
            .collect();
        let cfg = FusionConfig::default();
        let run = |order: &[usize], exec| {
            let b: Vec<UnpaddedStructure> = order.iter().map(|&i| batch[i].clone()).collect();
            let r: Vec<SemanticRecord> = order.iter().map(|&i| records[i].clone()).collect();
            let v = pad_batch(b).unwrap();
            let d = distance_matrix(&v, &StructuralWeights::default(), exec).unwrap();
            let out = cluster_batch(&r, &v, &d, &cfg, exec).unwrap();
            let mut groups: Vec<Vec<String>> = out.groups.into_iter().map(|g| {
                let mut m = g.member_ids;
                m.sort();
                m
            }).collect();
            groups.sort();
            groups
        };
        let identity: Vec<usize> = (0..n).collect();
        let mut rotated = identity.clone();
        rotated.rotate_left(rot % n);
        let base = run(&identity, Execution::Sequential);
        prop_assert_eq!(&base, &run(&identity, Execution::Parallel));
        // PCA on a reordered matrix may flip component signs; the partition must not change.
        prop_assert_eq!(&base, &run(&rotated, Execution::Sequential));
    }

    #[test]
    fn combined_score_is_monotone(j1 in 0.0f64..=1.0, j2 in 0.0f64..=1.0, s1 in -1.0f64..=1.0, s2 in -1.0f64..=1.0) {
        let cfg = MappingConfig::default();
        let (jl, jh) = (j1.min(j2), j1.max(j2));
        let (sl, sh) = (s1.min(s2), s1.max(s2));
        let low = combined_score(jl, sl, &cfg);
        prop_assert!(low <= combined_score(jh, sl, &cfg));
        prop_assert!(low <= combined_score(jl, sh, &cfg));
        prop_assert!((0.0..=1.0).contains(&low));
    }

    #[test]
    fn jaccard_properties(a in proptest::collection::btree_set("[a-e]", 0..5), b in proptest::collection::btree_set("[a-e]", 0..5)) {
        let a: Vec<String> = a.into_iter().collect();
        let b: Vec<String> = b.into_iter().collect();
        let ab = jaccard(&a, &b);
        prop_assert_eq!(ab, jaccard(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        if !a.is_empty() {
            prop_assert_eq!(jaccard(&a, &a), 1.0);
        }
    }

    #[test]
    fn coverage_grows_with_accepted_alignments(points in 1usize..12, hits in proptest::collection::vec(any::<bool>(), 12), extra in 0usize..12) {
        let sub = SubSpec {
            subspec_id: "s1".into(),
            title: "t".into(),
            body: "b".into(),
            signals_mentioned: vec!["x".into()],
            embedding: vec![1.0],
            points: (1..=points)
                .map(|i| FunctionalPoint {
                    point_id: format!("s1.p{i}"),
                    subspec_id: "s1".into(),
                    statement: "x.".into(),
                    signals: vec!["x".into()],
                    embedding: vec![1.0],
                })
                .collect(),
        };
        let align = |i: usize, accepted: bool| PointAlignment {
            assertion_id: format!("a{i}"),
            point_id: format!("s1.p{}", i % points + 1),
            signal_jaccard: 1.0,
            semantic_sim: 1.0,
            combined: if accepted { 1.0 } else { 0.1 },
            accepted,
        };
        let mut alignments: Vec<PointAlignment> = hits.iter().enumerate().map(|(i, &h)| align(i, h)).collect();
        let before = coverage_table(std::slice::from_ref(&sub), &alignments)[0].ratio;
        alignments.push(align(extra, true));
        let after = coverage_table(std::slice::from_ref(&sub), &alignments)[0].ratio;
        prop_assert!(after >= before);
        prop_assert!((0.0..=1.0).contains(&after));
        let distinct: BTreeMap<String, ()> = alignments.iter().filter(|a| a.accepted).map(|a| (a.point_id.clone(), ())).collect();
        prop_assert_eq!(after, distinct.len() as f64 / points as f64);
    }
}
