// SPDX-License-Identifier: Apache-2.0

//! Assertion input files: JSON Lines (`{"id", "sva"}` per line) or a plain
//! `.sv` file whose `assert property ... ;` statements are numbered `a1`, `a2`, ...

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAssertion {
    pub id: String,
    pub sva: String,
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("duplicate assertion id {0:?}")]
    DuplicateId(String),
}

pub fn load_assertions(path: &Path) -> Result<Vec<RawAssertion>, SourceError> {
    let text = std::fs::read_to_string(path).map_err(|source| SourceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let is_sv = matches!(path.extension().and_then(|e| e.to_str()), Some("sv" | "sva" | "v"));
    let records = if is_sv {
        split_sv_statements(&text)
    } else {
        parse_jsonl(&text)?
    };
    let mut seen = std::collections::HashSet::new();
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(SourceError::DuplicateId(r.id.clone()));
        }
    }
    Ok(records)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<RawAssertion>, SourceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let rec: RawAssertion = serde_json::from_str(line).map_err(|e| SourceError::Schema {
                line: i + 1,
                message: e.to_string(),
            })?;
            if rec.id.is_empty() {
                return Err(SourceError::Schema {
                    line: i + 1,
                    message: "empty id".into(),
                });
            }
            Ok(rec)
        })
        .collect()
}

/// Extracts each `assert property ... ;` statement (terminated by the first
/// `;` outside parentheses), skipping comments.
pub fn split_sv_statements(text: &str) -> Vec<RawAssertion> {
    let stripped = strip_comments(text);
    let bytes = stripped.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(rel) = stripped[i..].find("assert") {
        let start = i + rel;
        let word_start = start == 0 || !is_word(bytes[start - 1]);
        let after = start + "assert".len();
        let rest = &stripped[after..];
        let trimmed = rest.trim_start();
        let is_property = trimmed.starts_with("property")
            && !trimmed[8..].bytes().next().is_some_and(is_word)
            && rest.len() > trimmed.len();
        if !(word_start && is_property) {
            i = after;
            continue;
        }
        let mut depth = 0i32;
        let mut end = None;
        for (j, &b) in bytes.iter().enumerate().skip(after) {
            match b {
                b'(' => depth += 1,
                b')' => depth -= 1,
                b';' if depth <= 0 => {
                    end = Some(j + 1);
                    break;
                }
                _ => {}
            }
        }
        let end = end.unwrap_or(bytes.len());
        let sva = stripped[start..end].split_whitespace().collect::<Vec<_>>().join(" ");
        out.push(RawAssertion {
            id: format!("a{}", out.len() + 1),
            sva,
        });
        i = end;
    }
    out
}

fn is_word(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '/' && chars.peek() == Some(&'/') {
            for c in chars.by_ref() {
                if c == '\n' {
                    out.push('\n');
                    break;
                }
            }
        } else if c == '/' && chars.peek() == Some(&'*') {
            chars.next();
            let mut prev = '\0';
            for c in chars.by_ref() {
                if prev == '*' && c == '/' {
                    break;
                }
                prev = c;
            }
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out
}
