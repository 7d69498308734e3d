// SPDX-License-Identifier: Apache-2.0

//! Token scanner for the concurrent-assertion subset.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-open byte range `[start, end)` into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn join(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Number,
    Operator,
    Keyword,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvaToken {
    pub kind: TokenKind,
    pub lexeme: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("illegal character {ch:?} at byte {offset}")]
    IllegalChar { offset: usize, ch: char },
    #[error("unterminated block comment starting at byte {offset}")]
    UnterminatedComment { offset: usize },
    #[error("malformed number literal at byte {offset}")]
    MalformedNumber { offset: usize },
}

impl LexError {
    pub fn offset(&self) -> usize {
        match *self {
            LexError::IllegalChar { offset, .. }
            | LexError::UnterminatedComment { offset }
            | LexError::MalformedNumber { offset } => offset,
        }
    }
}

pub const KEYWORDS: &[&str] = &["assert", "property", "posedge", "negedge", "disable", "iff"];

// Longest first so that prefix matching picks the longest operator.
const OPERATORS: &[&str] = &[
    "===", "!==", "|->", "|=>", "##", "[*", "==", "!=", "<=", ">=", "&&", "||", "<", ">", "!", "~", "&", "|", "^", "@",
];

const PUNCTUATION: &[u8] = b"()[]:;,$";

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

fn is_based_digit(b: u8) -> bool {
    b.is_ascii_hexdigit() || matches!(b, b'_' | b'x' | b'X' | b'z' | b'Z' | b'?')
}

/// Splits `source` into tokens, skipping whitespace and `//` / `/* */` comments.
///
/// Hierarchical names such as `top.u_fifo.full` come back as one identifier
/// token; system function names (`$past`) are identifiers with a leading `$`.
pub fn tokenize(source: &str) -> Result<Vec<SvaToken>, LexError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;

    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let start = i;
            i += 2;
            loop {
                if i + 1 >= bytes.len() {
                    return Err(LexError::UnterminatedComment { offset: start });
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    break;
                }
                i += 1;
            }
            continue;
        }

        let start = i;
        let kind = if is_ident_start(b) {
            i = scan_identifier(bytes, i);
            if KEYWORDS.contains(&&source[start..i]) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if b == b'$' && bytes.get(i + 1).is_some_and(|&n| is_ident_start(n)) {
            i += 1;
            while i < bytes.len() && is_ident_continue(bytes[i]) {
                i += 1;
            }
            TokenKind::Identifier
        } else if b.is_ascii_digit() || b == b'\'' {
            i = scan_number(bytes, i)?;
            TokenKind::Number
        } else if let Some(op) = OPERATORS.iter().find(|op| source[i..].starts_with(**op)) {
            i += op.len();
            TokenKind::Operator
        } else if PUNCTUATION.contains(&b) {
            i += 1;
            TokenKind::Punctuation
        } else {
            let ch = source[i..].chars().next().unwrap_or('\u{fffd}');
            return Err(LexError::IllegalChar { offset: i, ch });
        };

        tokens.push(SvaToken {
            kind,
            lexeme: source[start..i].to_string(),
            span: Span::new(start, i),
        });
    }
    Ok(tokens)
}

fn scan_identifier(bytes: &[u8], mut i: usize) -> usize {
    loop {
        while i < bytes.len() && is_ident_continue(bytes[i]) {
            i += 1;
        }
        // `a.b.c` is a single hierarchical name.
        if i + 1 < bytes.len() && bytes[i] == b'.' && is_ident_start(bytes[i + 1]) {
            i += 1;
            continue;
        }
        return i;
    }
}

fn scan_number(bytes: &[u8], mut i: usize) -> Result<usize, LexError> {
    let start = i;
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'\'' {
        i += 1;
        if i < bytes.len() && matches!(bytes[i], b's' | b'S') {
            i += 1;
        }
        match bytes.get(i) {
            Some(b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H') => {
                i += 1;
                let digits = i;
                while i < bytes.len() && is_based_digit(bytes[i]) {
                    i += 1;
                }
                if i == digits {
                    return Err(LexError::MalformedNumber { offset: start });
                }
            }
            // Unbased unsized fill literals: '0 '1 'x 'z
            Some(b'0' | b'1' | b'x' | b'X' | b'z' | b'Z') if start + 1 == i => {
                i += 1;
            }
            _ => return Err(LexError::MalformedNumber { offset: start }),
        }
    }
    Ok(i)
}
