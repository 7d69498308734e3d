// SPDX-License-Identifier: Apache-2.0

//! Specification splitting and functional point extraction.
//!
//! A specification is split into sub-specifications (one per functional
//! module), each holding atomic single-sentence functional points. Both
//! steps go through the chat backend and are validated before use; the
//! results can be saved and reloaded as a fixture.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ArgumentError;
use crate::gateway::stub::{signal_tokens, split_sentences};
use crate::gateway::{Gateway, GatewayError};
use crate::parallel::bounded_map;
use crate::prompts::{render, PromptSet};
use crate::semantic::{l2_norm, normalize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalPoint {
    pub point_id: String,
    pub subspec_id: String,
    pub statement: String,
    pub signals: Vec<String>,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubSpec {
    pub subspec_id: String,
    pub title: String,
    pub body: String,
    pub signals_mentioned: Vec<String>,
    pub embedding: Vec<f64>,
    pub points: Vec<FunctionalPoint>,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error(transparent)]
    Argument(#[from] ArgumentError),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("validation failed ({rule}): {detail}")]
    Validation { rule: &'static str, detail: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema: {0}")]
    Schema(String),
}

impl SpecError {
    fn validation(rule: &'static str, detail: impl Into<String>) -> SpecError {
        SpecError::Validation {
            rule,
            detail: detail.into(),
        }
    }

    /// The failed validation rule, if this is a validation error.
    pub fn rule(&self) -> Option<&'static str> {
        match self {
            SpecError::Validation { rule, .. } => Some(rule),
            _ => None,
        }
    }
}

/// Lower-cased set of known signal names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Glossary {
    names: BTreeSet<String>,
}

impl Glossary {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(names: I) -> Glossary {
        Glossary {
            names: names
                .into_iter()
                .map(|s| s.as_ref().trim().to_lowercase())
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }

    /// One name per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Glossary {
        Glossary::new(text.lines().filter(|l| !l.trim_start().starts_with('#')))
    }

    pub fn load(path: &Path) -> Result<Glossary, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Glossary::parse(&text))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(&name.to_lowercase())
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Deserialize)]
struct SplitReply {
    title: String,
    body: String,
    #[serde(default)]
    signals: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct PointReply {
    statement: String,
    #[serde(default)]
    signals: Vec<String>,
}

/// Parses a JSON array out of a chat reply, tolerating surrounding prose or
/// a code fence.
fn json_array<T: for<'de> Deserialize<'de>>(reply: &str) -> Result<Vec<T>, SpecError> {
    let start = reply.find('[');
    let end = reply.rfind(']');
    let slice = match (start, end) {
        (Some(s), Some(e)) if s < e => &reply[s..=e],
        _ => return Err(SpecError::validation("json", "reply holds no JSON array")),
    };
    serde_json::from_str(slice).map_err(|e| SpecError::validation("json", e.to_string()))
}

fn body_token_set(body: &str) -> BTreeSet<String> {
    signal_tokens(body).into_iter().map(|t| t.to_lowercase()).collect()
}

/// Checks that bodies are verbatim (whitespace-normalized), non-overlapping
/// slices of `spec_text` in document order.
fn validate_split(spec_text: &str, items: &[SplitReply]) -> Result<(), SpecError> {
    if items.is_empty() {
        return Err(SpecError::validation("empty", "no sections returned"));
    }
    let doc = normalize_whitespace(spec_text);
    let mut prev: Option<(usize, usize)> = None;
    for (i, item) in items.iter().enumerate() {
        let body = normalize_whitespace(&item.body);
        if body.is_empty() {
            return Err(SpecError::validation("empty body", format!("section {}", i + 1)));
        }
        if item.title.trim().is_empty() {
            return Err(SpecError::validation("empty title", format!("section {}", i + 1)));
        }
        let from = prev.map_or(0, |(_, end)| end);
        if let Some(off) = doc[from..].find(&body) {
            let start = from + off;
            prev = Some((start, start + body.len()));
            continue;
        }
        let Some(start) = doc.find(&body) else {
            return Err(SpecError::validation(
                "verbatim",
                format!("section {} is not a substring of the spec", i + 1),
            ));
        };
        let (ps, pe) = prev.expect("first section always matches from 0");
        let end = start + body.len();
        if start < pe && end > ps {
            return Err(SpecError::validation(
                "overlap",
                format!("section {} overlaps section {}", i + 1, i),
            ));
        }
        return Err(SpecError::validation(
            "order",
            format!("section {} precedes section {}", i + 1, i),
        ));
    }
    Ok(())
}

fn embed_unit(gateway: &Gateway, text: &str) -> Result<Vec<f64>, SpecError> {
    let raw = gateway.embed(text)?;
    if raw.len() != gateway.d_sem() {
        return Err(GatewayError::DimensionMismatch {
            expected: gateway.d_sem(),
            got: raw.len(),
        }
        .into());
    }
    normalize(&raw).map_err(|e| SpecError::validation("embedding", format!("{e} for {text:?}")))
}

/// Asks `gateway` again with a repair note until `check` accepts the reply
/// or the retry budget is spent.
fn chat_validated<T>(
    gateway: &Gateway,
    prompt: &str,
    mut check: impl FnMut(&str) -> Result<T, SpecError>,
) -> Result<T, SpecError> {
    let mut request = prompt.to_string();
    let mut attempt = 0;
    loop {
        let reply = gateway.chat(&request)?;
        match check(&reply) {
            Ok(v) => return Ok(v),
            Err(e @ SpecError::Validation { .. }) if attempt < gateway.max_retries() => {
                log::warn!("rejected backend reply: {e}");
                attempt += 1;
                request =
                    format!("{prompt}\n\nYour previous answer was rejected ({e}). Answer again, following every rule.");
            }
            Err(e) => return Err(e),
        }
    }
}

/// Splits `spec_text` into sub-specifications without points. Signals the
/// backend lists that occur neither in the body nor in the glossary are
/// dropped.
pub fn split_spec(
    spec_text: &str,
    glossary: &Glossary,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<Vec<SubSpec>, SpecError> {
    if spec_text.trim().is_empty() {
        return Err(ArgumentError::new("specification text is empty").into());
    }
    let glossary_text = glossary.names().collect::<Vec<_>>().join("\n");
    let prompt = render(&prompts.split, &[("GLOSSARY", &glossary_text), ("SPEC", spec_text)]);
    let items = chat_validated(gateway, &prompt, |reply| {
        let items: Vec<SplitReply> = json_array(reply)?;
        validate_split(spec_text, &items)?;
        Ok(items)
    })?;

    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let tokens = body_token_set(&item.body);
            let signals: BTreeSet<String> = item
                .signals
                .into_iter()
                .filter(|s| {
                    let ok = tokens.contains(&s.to_lowercase()) || glossary.contains(s);
                    if !ok {
                        log::warn!("section {:?}: dropping unknown signal {s:?}", item.title);
                    }
                    ok
                })
                .collect();
            let title = item.title.trim().to_string();
            let body = item.body.trim().to_string();
            let embedding = embed_unit(gateway, &format!("{title}\n{body}"))?;
            Ok(SubSpec {
                subspec_id: format!("s{}", i + 1),
                title,
                body,
                signals_mentioned: signals.into_iter().collect(),
                embedding,
                points: Vec::new(),
            })
        })
        .collect()
}

fn validate_points(sub: &SubSpec, glossary: &Glossary, items: &[PointReply]) -> Result<(), SpecError> {
    let tokens = body_token_set(&sub.body);
    for item in items {
        let sentences = split_sentences(&item.statement);
        if sentences.len() != 1 {
            return Err(SpecError::validation(
                "single sentence",
                format!("{:?} holds {} sentences", item.statement, sentences.len()),
            ));
        }
        for s in &item.signals {
            if !tokens.contains(&s.to_lowercase()) && !glossary.contains(s) {
                return Err(SpecError::validation(
                    "unknown signal",
                    format!("{s:?} in {:?}", item.statement),
                ));
            }
        }
    }
    Ok(())
}

/// Functional points of one sub-specification, ids `<subspec_id>.p<n>`.
/// A body without signal tokens yields an empty list and a warning.
pub fn extract_points(
    sub: &SubSpec,
    glossary: &Glossary,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<Vec<FunctionalPoint>, SpecError> {
    if sub.body.trim().is_empty() {
        return Err(ArgumentError::new(format!("sub-spec {} has an empty body", sub.subspec_id)).into());
    }
    let glossary_text = glossary.names().collect::<Vec<_>>().join("\n");
    let prompt = render(
        &prompts.points,
        &[
            ("TITLE", sub.title.as_str()),
            ("SIGNALS", sub.signals_mentioned.join(", ").as_str()),
            ("GLOSSARY", glossary_text.as_str()),
            ("BODY", sub.body.as_str()),
        ],
    );
    let items = chat_validated(gateway, &prompt, |reply| {
        let items: Vec<PointReply> = json_array(reply)?;
        validate_points(sub, glossary, &items)?;
        Ok(items)
    })?;
    if items.is_empty() {
        log::warn!(
            "sub-spec {} ({:?}) yielded no functional points",
            sub.subspec_id,
            sub.title
        );
    }
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let statement = normalize_whitespace(&item.statement);
            let signals: BTreeSet<String> = item.signals.into_iter().collect();
            Ok(FunctionalPoint {
                point_id: format!("{}.p{}", sub.subspec_id, i + 1),
                subspec_id: sub.subspec_id.clone(),
                embedding: embed_unit(gateway, &statement)?,
                statement,
                signals: signals.into_iter().collect(),
            })
        })
        .collect()
}

/// Split followed by point extraction; extraction runs concurrently over
/// sub-specs, results stay in document order.
pub fn build_subspecs(
    spec_text: &str,
    glossary: &Glossary,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<Vec<SubSpec>, SpecError> {
    let subs = split_spec(spec_text, glossary, gateway, prompts)?;
    let points = bounded_map(&subs, gateway.max_in_flight(), |s| {
        extract_points(s, glossary, gateway, prompts)
    })?;
    Ok(subs
        .into_iter()
        .zip(points)
        .map(|(mut s, p)| {
            s.points = p;
            s
        })
        .collect())
}

fn schema(msg: impl Into<String>) -> SpecError {
    SpecError::Schema(msg.into())
}

fn is_sorted_unique(v: &[String]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

fn check_unit(what: &str, v: &[f64]) -> Result<(), SpecError> {
    let n = l2_norm(v);
    if (n - 1.0).abs() > 1e-6 {
        return Err(schema(format!("{what}: embedding norm {n} is not 1")));
    }
    Ok(())
}

/// Re-checks the invariants of a loaded set of sub-specs.
pub fn validate_subspecs(subs: &[SubSpec]) -> Result<(), SpecError> {
    let mut ids = BTreeSet::new();
    let dim = subs.first().map(|s| s.embedding.len());
    for s in subs {
        if !ids.insert(s.subspec_id.as_str()) {
            return Err(schema(format!("duplicate subspec_id {:?}", s.subspec_id)));
        }
        if Some(s.embedding.len()) != dim {
            return Err(schema(format!("{}: embedding dimension differs", s.subspec_id)));
        }
        check_unit(&s.subspec_id, &s.embedding)?;
        if !is_sorted_unique(&s.signals_mentioned) {
            return Err(schema(format!(
                "{}: signals_mentioned must be sorted and unique",
                s.subspec_id
            )));
        }
        let mut pids = BTreeSet::new();
        for p in &s.points {
            if p.subspec_id != s.subspec_id {
                return Err(schema(format!("{} is listed under {}", p.point_id, s.subspec_id)));
            }
            if !pids.insert(p.point_id.as_str()) {
                return Err(schema(format!("duplicate point_id {:?}", p.point_id)));
            }
            if split_sentences(&p.statement).len() != 1 {
                return Err(schema(format!("{}: statement must be one sentence", p.point_id)));
            }
            if !is_sorted_unique(&p.signals) {
                return Err(schema(format!("{}: signals must be sorted and unique", p.point_id)));
            }
            if Some(p.embedding.len()) != dim {
                return Err(schema(format!("{}: embedding dimension differs", p.point_id)));
            }
            check_unit(&p.point_id, &p.embedding)?;
        }
    }
    Ok(())
}

pub fn parse_fixture(text: &str) -> Result<Vec<SubSpec>, SpecError> {
    let subs: Vec<SubSpec> = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    validate_subspecs(&subs)?;
    Ok(subs)
}

pub fn load_fixture(path: &Path) -> Result<Vec<SubSpec>, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_fixture(&text)
}

pub fn save_fixture(path: &Path, subs: &[SubSpec]) -> Result<(), SpecError> {
    let text = serde_json::to_string_pretty(subs).expect("sub-specs serialize");
    std::fs::write(path, text + "\n").map_err(|source| SpecError::Io {
        path: path.display().to_string(),
        source,
    })
}
