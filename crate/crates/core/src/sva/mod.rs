// SPDX-License-Identifier: Apache-2.0

//! SystemVerilog assertion front end: lexing, parsing and signal extraction.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod source;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use ast::{Ast, AstError, AstNode, NodeId, NodeKind};
pub use lexer::{tokenize, LexError, Span, SvaToken, TokenKind};
pub use parser::ParseError;
pub use source::{load_assertions, RawAssertion, SourceError};

use crate::error::ArgumentError;

/// One assertion after the local syntax gate.
///
/// `ast` is present iff `syntax_ok`; `signals` is then the sorted set of
/// base signal names referenced by the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAssertion {
    pub assertion_id: String,
    pub raw_text: String,
    pub ast: Option<Ast>,
    pub signals: Vec<String>,
    pub syntax_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Parses `source`; syntax failures are reported through `syntax_ok` and
/// `diagnostic`, never as an error.
pub fn parse_assertion(id: &str, source: &str) -> Result<ParsedAssertion, ArgumentError> {
    if id.is_empty() {
        return Err(ArgumentError::new("assertion id must not be empty"));
    }
    let parsed = match parser::parse(source) {
        Ok(ast) => ParsedAssertion {
            assertion_id: id.to_string(),
            raw_text: source.to_string(),
            signals: extract_signals(&ast),
            ast: Some(ast),
            syntax_ok: true,
            diagnostic: None,
        },
        Err(err) => ParsedAssertion {
            assertion_id: id.to_string(),
            raw_text: source.to_string(),
            ast: None,
            signals: Vec::new(),
            syntax_ok: false,
            diagnostic: Some(err.to_string()),
        },
    };
    Ok(parsed)
}

/// Distinct base names of all `signal_ref` leaves, sorted ascending.
pub fn extract_signals(ast: &Ast) -> Vec<String> {
    ast.nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::SignalRef)
        .filter_map(|n| n.value.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
