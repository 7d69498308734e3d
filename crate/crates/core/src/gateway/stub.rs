// SPDX-License-Identifier: Apache-2.0

//! Deterministic offline backend.
//!
//! Embeddings: the lowercased input is split into tokens (maximal runs of
//! alphanumerics and `_`); each distinct token seeds a splitmix64 stream
//! with its 64-bit FNV-1a hash, the stream yields `d` values in `[-1, 1)`,
//! and the per-token vectors are summed in sorted token order. The sum is
//! returned un-normalized.
//!
//! Chat: the prompt kind is recognized from the tagged sections the
//! bundled templates emit (`<sva>`, `<document>`, `<subspec>`).

use std::collections::BTreeSet;

use serde::Serialize;

use crate::sva::{self, Ast, NodeKind};

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// One step of the splitmix64 generator; advances `state` and returns the output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps the top 53 bits of `x` onto `[-1, 1)`.
pub fn unit_interval(x: u64) -> f64 {
    ((x >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

pub fn embedding_tokens(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn stub_embedding(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for token in embedding_tokens(text) {
        let mut state = fnv1a64(token.as_bytes());
        for slot in v.iter_mut() {
            *slot += unit_interval(splitmix64(&mut state));
        }
    }
    v
}

pub fn stub_chat(prompt: &str) -> String {
    if let Some(sva_text) = section(prompt, "sva") {
        let signals = section(prompt, "signals").unwrap_or_default();
        return intent_summary(&sva_text, &signals);
    }
    if let Some(document) = section(prompt, "document") {
        let glossary = section(prompt, "glossary").unwrap_or_default();
        return split_document(&document, &word_list(&glossary));
    }
    if let Some(body) = section(prompt, "subspec") {
        let mut known = word_list(&section(prompt, "signals").unwrap_or_default());
        known.extend(word_list(&section(prompt, "glossary").unwrap_or_default()));
        return sentence_points(&body, &known);
    }
    "OK".to_string()
}

/// Text between `<tag>` and `</tag>`, trimmed.
fn section(prompt: &str, tag: &str) -> Option<String> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = prompt.find(&open)? + open.len();
    let end = start + prompt[start..].find(&close)?;
    Some(prompt[start..end].trim().to_string())
}

fn word_list(text: &str) -> BTreeSet<String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// `SIGNALS[<sorted signals>] <OPERATOR SUMMARY>`; the summary lists the
/// operator nodes of the property body (clocking and disable clauses
/// excluded) in pre-order.
pub fn intent_summary(sva_text: &str, signals: &str) -> String {
    match sva::parser::parse(sva_text) {
        Ok(ast) => {
            let names = sva::extract_signals(&ast).join(",");
            let ops = operator_summary(&ast);
            if ops.is_empty() {
                format!("SIGNALS[{names}] HOLDS")
            } else {
                format!("SIGNALS[{names}] {}", ops.join(" "))
            }
        }
        Err(_) => {
            let mut names = word_list(signals);
            if names.is_empty() {
                names = loose_identifiers(sva_text);
            }
            let names: Vec<String> = names.into_iter().collect();
            format!("SIGNALS[{}] UNPARSED", names.join(","))
        }
    }
}

fn loose_identifiers(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$'))
        .filter(|w| {
            w.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') && !sva::lexer::KEYWORDS.contains(w)
        })
        .map(str::to_string)
        .collect()
}

fn operator_summary(ast: &Ast) -> Vec<String> {
    let mut out = Vec::new();
    let root = &ast.nodes()[ast.root()];
    let Some(&property) = root.children.first() else {
        return out;
    };
    let Some(&body) = ast.nodes()[property].children.last() else {
        return out;
    };
    let mut stack = vec![body];
    while let Some(id) = stack.pop() {
        let node = &ast.nodes()[id];
        let value = node.value.as_deref().unwrap_or("");
        let word = match node.kind {
            NodeKind::Implication if value == "|=>" => Some("IMPLIES_NEXT".to_string()),
            NodeKind::Implication => Some("IMPLIES".to_string()),
            NodeKind::Delay => Some(format!("DELAY{value}")),
            NodeKind::Repetition => Some(format!("REPEAT[{value}]")),
            NodeKind::Sequence => Some("SEQUENCE".to_string()),
            NodeKind::BooleanOp | NodeKind::Comparison | NodeKind::UnaryOp => Some(
                match value {
                    "&&" => "AND",
                    "||" => "OR",
                    "&" => "BITAND",
                    "|" => "BITOR",
                    "^" => "XOR",
                    "==" | "===" => "EQ",
                    "!=" | "!==" => "NE",
                    "<" => "LT",
                    "<=" => "LE",
                    ">" => "GT",
                    ">=" => "GE",
                    "!" => "NOT",
                    "~" => "INV",
                    other => other,
                }
                .to_string(),
            ),
            NodeKind::SystemFunc => Some(value.trim_start_matches('$').to_uppercase()),
            NodeKind::IndexSelect => Some("BIT".to_string()),
            NodeKind::RangeSelect => Some("SLICE".to_string()),
            _ => None,
        };
        out.extend(word);
        stack.extend(node.children.iter().rev());
    }
    out
}

#[derive(Serialize)]
struct SplitItem {
    title: String,
    body: String,
    signals: Vec<String>,
}

/// One section per markdown heading (`#` or `##`); sections with an empty
/// body are skipped. Signals are glossary words and backticked identifiers
/// found in the body.
fn split_document(document: &str, glossary: &BTreeSet<String>) -> String {
    let mut items = Vec::new();
    let mut title: Option<String> = None;
    let mut body: Vec<&str> = Vec::new();
    let mut flush = |title: &Option<String>, body: &mut Vec<&str>| {
        if let Some(t) = title {
            let text = body.join("\n").trim().to_string();
            if !text.is_empty() {
                items.push(SplitItem {
                    title: t.clone(),
                    signals: body_signals(&text, glossary),
                    body: text,
                });
            }
        }
        body.clear();
    };
    for line in document.lines() {
        let trimmed = line.trim_start();
        let heading = trimmed
            .strip_prefix("## ")
            .or_else(|| trimmed.strip_prefix("# "))
            .filter(|_| !trimmed.starts_with("###"));
        if let Some(h) = heading {
            flush(&title, &mut body);
            title = Some(h.trim().to_string());
        } else if title.is_some() {
            body.push(line);
        }
    }
    flush(&title, &mut body);
    serde_json::to_string(&items).expect("plain structs serialize")
}

fn body_signals(body: &str, glossary: &BTreeSet<String>) -> Vec<String> {
    let mut found = BTreeSet::new();
    for token in signal_tokens(body) {
        if glossary.contains(&token.to_lowercase()) {
            found.insert(token);
        }
    }
    let mut rest = body;
    while let Some(open) = rest.find('`') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('`') else { break };
        let inner = &after[..close];
        if !inner.is_empty() && inner.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            found.insert(inner.to_string());
        }
        rest = &after[close + 1..];
    }
    found.into_iter().collect()
}

/// Identifier-like tokens of free text; hierarchical dots are kept
/// (`u_fifo.full`), sentence punctuation is not.
pub fn signal_tokens(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let ident_start = |b: u8| b.is_ascii_alphabetic() || b == b'_';
    let ident_continue = |b: u8| b.is_ascii_alphanumeric() || b == b'_' || b == b'$';
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let prev_is_word = i > 0 && (ident_continue(bytes[i - 1]) || bytes[i - 1] >= 0x80);
        if !ident_start(bytes[i]) || prev_is_word {
            i += 1;
            continue;
        }
        let start = i;
        loop {
            while i < bytes.len() && ident_continue(bytes[i]) {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && ident_start(bytes[i + 1]) {
                i += 1;
                continue;
            }
            break;
        }
        if i < bytes.len() && bytes[i] >= 0x80 {
            continue;
        }
        out.push(text[start..i].to_string());
    }
    out
}

#[derive(Serialize)]
struct PointItem {
    statement: String,
    signals: Vec<String>,
}

fn sentence_points(body: &str, known: &BTreeSet<String>) -> String {
    let items: Vec<PointItem> = split_sentences(body)
        .into_iter()
        .filter_map(|sentence| {
            let signals: BTreeSet<String> = signal_tokens(&sentence)
                .into_iter()
                .filter(|t| known.contains(&t.to_lowercase()))
                .collect();
            (!signals.is_empty()).then(|| PointItem {
                statement: sentence,
                signals: signals.into_iter().collect(),
            })
        })
        .collect();
    serde_json::to_string(&items).expect("plain structs serialize")
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of text. Dots
/// inside identifiers or numbers (`u.q`, `0.85`) do not end a sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        current.push(c);
        let terminal = matches!(c, '.' | '!' | '?');
        let boundary = chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if terminal && boundary {
            let s = current.split_whitespace().collect::<Vec<_>>().join(" ");
            if !s.is_empty() {
                out.push(s);
            }
            current.clear();
        }
    }
    let s = current.split_whitespace().collect::<Vec<_>>().join(" ");
    if !s.is_empty() {
        out.push(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn splitmix_reference_value() {
        // First output for seed 0 of the reference splitmix64.
        let mut s = 0u64;
        assert_eq!(splitmix64(&mut s), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn embedding_is_token_set_function() {
        assert_eq!(stub_embedding("Req GNT req", 16), stub_embedding("gnt, req", 16));
        assert_ne!(stub_embedding("req", 16), stub_embedding("gnt", 16));
    }

    #[test]
    fn intent_for_request_grant() {
        assert_eq!(
            intent_summary("assert property (@(posedge clk) req |-> ##1 gnt);", "clk, gnt, req"),
            "SIGNALS[clk,gnt,req] IMPLIES DELAY1"
        );
    }

    #[test]
    fn intent_for_broken_text_uses_raw_identifiers() {
        assert_eq!(intent_summary("assert property (a |-> );", ""), "SIGNALS[a] UNPARSED");
    }

    #[test]
    fn sentences() {
        assert_eq!(
            split_sentences("The u.q flag is 0.85 high. Then b! Done"),
            vec!["The u.q flag is 0.85 high.", "Then b!", "Done"]
        );
    }

    #[test]
    fn split_on_headings() {
        let doc = "# Title\n\n## One\nFirst `a` part.\n## Two\nSecond b part.\n### Sub\nstill two.\n";
        let json = split_document(doc, &["b".to_string()].into_iter().collect());
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 2);
        assert_eq!(v[0]["title"], "One");
        assert_eq!(v[0]["signals"], serde_json::json!(["a"]));
        assert_eq!(v[1]["body"], "Second b part.\n### Sub\nstill two.");
        assert_eq!(v[1]["signals"], serde_json::json!(["b"]));
    }
}
