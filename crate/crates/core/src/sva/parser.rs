// SPDX-License-Identifier: Apache-2.0

//! Recursive-descent parser for `assert property (...)` statements.
//!
//! Supported: optional label, `@(posedge|negedge clk)` clocking,
//! `disable iff (...)`, `|->` / `|=>`, `##N` and `##[m:n]` delays, `[*n]`
//! repetition, `&& || ! ~ & | ^`, comparisons, bit and part selects,
//! system functions and hierarchical names.

use thiserror::Error;

use super::ast::{Ast, AstNode, NodeKind};
use super::lexer::{tokenize, LexError, Span, SvaToken, TokenKind};

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("lex error: {0}")]
    Lex(#[from] LexError),
    #[error("expected {expected} at byte {offset}, found {found}")]
    Unexpected {
        expected: String,
        found: String,
        offset: usize,
    },
    #[error("nesting deeper than {MAX_DEPTH} levels at byte {offset}")]
    TooDeep { offset: usize },
    #[error("empty input")]
    Empty,
}

struct Proto {
    kind: NodeKind,
    value: Option<String>,
    children: Vec<usize>,
    span: Span,
}

struct Parser<'a> {
    tokens: &'a [SvaToken],
    pos: usize,
    end: usize,
    arena: Vec<Proto>,
    depth: usize,
}

/// Parses one assertion statement into a tree whose ids are assigned in
/// pre-order (root = 0).
pub fn parse(source: &str) -> Result<Ast, ParseError> {
    let tokens = tokenize(source)?;
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        end: source.len(),
        arena: Vec::new(),
        depth: 0,
    };
    let root = parser.assertion()?;
    Ok(renumber(parser.arena, root))
}

fn renumber(arena: Vec<Proto>, root: usize) -> Ast {
    let mut order = Vec::with_capacity(arena.len());
    let mut stack = vec![root];
    while let Some(i) = stack.pop() {
        order.push(i);
        stack.extend(arena[i].children.iter().rev());
    }
    let mut new_id = vec![usize::MAX; arena.len()];
    for (new, &old) in order.iter().enumerate() {
        new_id[old] = new;
    }
    let mut slots: Vec<Option<Proto>> = arena.into_iter().map(Some).collect();
    let nodes: Vec<AstNode> = order
        .iter()
        .enumerate()
        .map(|(id, &old)| {
            let proto = slots[old].take().expect("each node visited once");
            AstNode {
                id,
                kind: proto.kind,
                value: proto.value,
                children: proto.children.iter().map(|&c| new_id[c]).collect(),
                span: proto.span,
            }
        })
        .collect();
    Ast::from_nodes(nodes).expect("parser builds well-formed trees")
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a SvaToken> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, ahead: usize) -> Option<&'a SvaToken> {
        self.tokens.get(self.pos + ahead)
    }

    fn is(&self, lexeme: &str) -> bool {
        self.peek()
            .is_some_and(|t| t.lexeme == lexeme && t.kind != TokenKind::Identifier)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.span.start)
    }

    fn error<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::Unexpected {
            expected: expected.to_string(),
            found: self
                .peek()
                .map_or_else(|| "end of input".to_string(), |t| format!("{:?}", t.lexeme)),
            offset: self.offset(),
        })
    }

    fn expect(&mut self, lexeme: &str) -> Result<&'a SvaToken, ParseError> {
        if self.is(lexeme) {
            let tok = &self.tokens[self.pos];
            self.pos += 1;
            Ok(tok)
        } else {
            self.error(&format!("{lexeme:?}"))
        }
    }

    fn eat(&mut self, lexeme: &str) -> Option<&'a SvaToken> {
        if self.is(lexeme) {
            self.pos += 1;
            Some(&self.tokens[self.pos - 1])
        } else {
            None
        }
    }

    fn push(&mut self, kind: NodeKind, value: Option<String>, children: Vec<usize>, span: Span) -> usize {
        self.arena.push(Proto {
            kind,
            value,
            children,
            span,
        });
        self.arena.len() - 1
    }

    fn span_of(&self, id: usize) -> Span {
        self.arena[id].span
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::TooDeep { offset: self.offset() });
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn assertion(&mut self) -> Result<usize, ParseError> {
        let start = self.offset();
        // optional `label :`
        if self.peek().is_some_and(|t| t.kind == TokenKind::Identifier)
            && self.peek_at(1).is_some_and(|t| t.lexeme == ":")
        {
            self.pos += 2;
        }
        self.expect("assert")?;
        self.expect("property")?;
        self.expect("(")?;
        let property = self.property_spec()?;
        let close = self.expect(")")?;
        let mut end = close.span.end;
        if let Some(semi) = self.eat(";") {
            end = semi.span.end;
        }
        if self.peek().is_some() {
            return self.error("end of assertion");
        }
        Ok(self.push(NodeKind::Assertion, None, vec![property], Span::new(start, end)))
    }

    fn property_spec(&mut self) -> Result<usize, ParseError> {
        let mut children = Vec::new();
        let mut value = None;
        if self.is("@") {
            children.push(self.clocking_event()?);
        }
        if self.eat("disable").is_some() {
            self.expect("iff")?;
            self.expect("(")?;
            children.push(self.expr()?);
            self.expect(")")?;
            value = Some("disable_iff".to_string());
        }
        let body = self.property_expr()?;
        children.push(body);
        let span = children
            .iter()
            .map(|&c| self.span_of(c))
            .reduce(Span::join)
            .expect("property has a body");
        Ok(self.push(NodeKind::Property, value, children, span))
    }

    fn clocking_event(&mut self) -> Result<usize, ParseError> {
        let at = self.expect("@")?;
        self.expect("(")?;
        let edge = self
            .eat("posedge")
            .or_else(|| self.eat("negedge"))
            .map(|t| t.lexeme.clone());
        let clock = self.expr()?;
        let close = self.expect(")")?;
        Ok(self.push(
            NodeKind::ClockingEvent,
            edge,
            vec![clock],
            Span::new(at.span.start, close.span.end),
        ))
    }

    fn property_expr(&mut self) -> Result<usize, ParseError> {
        self.enter()?;
        let antecedent = self.sequence_expr()?;
        let op = self.eat("|->").or_else(|| self.eat("|=>"));
        let result = match op {
            Some(op) => {
                let consequent = self.property_expr()?;
                let span = self.span_of(antecedent).join(self.span_of(consequent));
                Ok(self.push(
                    NodeKind::Implication,
                    Some(op.lexeme.clone()),
                    vec![antecedent, consequent],
                    span,
                ))
            }
            None => Ok(antecedent),
        };
        self.leave();
        result
    }

    fn sequence_expr(&mut self) -> Result<usize, ParseError> {
        self.enter()?;
        let mut items = Vec::new();
        if self.is("##") {
            items.push(self.delayed_item()?);
        } else {
            items.push(self.sequence_item()?);
        }
        while self.is("##") {
            items.push(self.delayed_item()?);
        }
        let result = if items.len() == 1 {
            items[0]
        } else {
            let span = self.span_of(items[0]).join(self.span_of(*items.last().unwrap()));
            self.push(NodeKind::Sequence, None, items, span)
        };
        self.leave();
        Ok(result)
    }

    fn delayed_item(&mut self) -> Result<usize, ParseError> {
        let hash = self.expect("##")?;
        let range = if self.eat("[").is_some() {
            let (lo, hi) = self.range_bounds()?;
            self.expect("]")?;
            format!("[{lo}:{hi}]")
        } else {
            self.number()?
        };
        let item = self.sequence_item()?;
        let span = Span::new(hash.span.start, self.span_of(item).end);
        Ok(self.push(NodeKind::Delay, Some(range), vec![item], span))
    }

    fn number(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Number && t.lexeme.bytes().all(|b| b.is_ascii_digit()) => {
                self.pos += 1;
                Ok(t.lexeme.clone())
            }
            _ => self.error("cycle count"),
        }
    }

    fn range_bounds(&mut self) -> Result<(String, String), ParseError> {
        let lo = self.number()?;
        self.expect(":")?;
        let hi = if self.eat("$").is_some() {
            "$".to_string()
        } else {
            self.number()?
        };
        Ok((lo, hi))
    }

    fn sequence_item(&mut self) -> Result<usize, ParseError> {
        let item = self.expr()?;
        if self.is("[*") {
            self.pos += 1;
            let count = self.number()?;
            let count = if self.eat(":").is_some() {
                let hi = if self.eat("$").is_some() {
                    "$".to_string()
                } else {
                    self.number()?
                };
                format!("{count}:{hi}")
            } else {
                count
            };
            let close = self.expect("]")?;
            let span = Span::new(self.span_of(item).start, close.span.end);
            return Ok(self.push(NodeKind::Repetition, Some(count), vec![item], span));
        }
        Ok(item)
    }

    fn expr(&mut self) -> Result<usize, ParseError> {
        self.enter()?;
        let result = self.binary(0);
        self.leave();
        result
    }

    // Precedence levels, loosest first.
    const LEVELS: &'static [(&'static [&'static str], NodeKind)] = &[
        (&["||"], NodeKind::BooleanOp),
        (&["&&"], NodeKind::BooleanOp),
        (&["|"], NodeKind::BooleanOp),
        (&["^"], NodeKind::BooleanOp),
        (&["&"], NodeKind::BooleanOp),
        (&["==", "!=", "===", "!=="], NodeKind::Comparison),
        (&["<", "<=", ">", ">="], NodeKind::Comparison),
    ];

    fn binary(&mut self, level: usize) -> Result<usize, ParseError> {
        if level == Self::LEVELS.len() {
            return self.unary();
        }
        let (ops, kind) = Self::LEVELS[level];
        let mut lhs = self.binary(level + 1)?;
        while let Some(op) = ops.iter().find_map(|op| self.eat(op)) {
            let rhs = self.binary(level + 1)?;
            let span = self.span_of(lhs).join(self.span_of(rhs));
            lhs = self.push(kind, Some(op.lexeme.clone()), vec![lhs, rhs], span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<usize, ParseError> {
        if let Some(op) = self.eat("!").or_else(|| self.eat("~")) {
            self.enter()?;
            let operand = self.unary()?;
            self.leave();
            let span = Span::new(op.span.start, self.span_of(operand).end);
            return Ok(self.push(NodeKind::UnaryOp, Some(op.lexeme.clone()), vec![operand], span));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<usize, ParseError> {
        let Some(tok) = self.peek() else {
            return self.error("expression");
        };
        match tok.kind {
            TokenKind::Identifier if tok.lexeme.starts_with('$') => {
                self.pos += 1;
                let mut args = Vec::new();
                let mut end = tok.span.end;
                if self.eat("(").is_some() {
                    if !self.is(")") {
                        args.push(self.expr()?);
                        while self.eat(",").is_some() {
                            args.push(self.expr()?);
                        }
                    }
                    end = self.expect(")")?.span.end;
                }
                Ok(self.push(
                    NodeKind::SystemFunc,
                    Some(tok.lexeme.clone()),
                    args,
                    Span::new(tok.span.start, end),
                ))
            }
            TokenKind::Identifier => {
                self.pos += 1;
                let signal = self.push(NodeKind::SignalRef, Some(tok.lexeme.clone()), vec![], tok.span);
                if !self.is("[") {
                    return Ok(signal);
                }
                self.pos += 1;
                let first = self.expr()?;
                if self.eat(":").is_some() {
                    let second = self.expr()?;
                    let close = self.expect("]")?;
                    Ok(self.push(
                        NodeKind::RangeSelect,
                        None,
                        vec![signal, first, second],
                        Span::new(tok.span.start, close.span.end),
                    ))
                } else {
                    let close = self.expect("]")?;
                    Ok(self.push(
                        NodeKind::IndexSelect,
                        None,
                        vec![signal, first],
                        Span::new(tok.span.start, close.span.end),
                    ))
                }
            }
            TokenKind::Number => {
                self.pos += 1;
                Ok(self.push(NodeKind::Literal, Some(tok.lexeme.clone()), vec![], tok.span))
            }
            _ if tok.lexeme == "(" => {
                self.pos += 1;
                let inner = self.sequence_expr()?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => self.error("expression"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(ast: &Ast) -> Vec<NodeKind> {
        ast.preorder().into_iter().map(|id| ast.nodes()[id].kind).collect()
    }

    #[test]
    fn clocked_implication_shape() {
        let ast = parse("assert property (@(posedge clk) req |-> ##1 gnt);").unwrap();
        use NodeKind::*;
        assert_eq!(
            kinds(&ast),
            vec![
                Assertion,
                Property,
                ClockingEvent,
                SignalRef,
                Implication,
                SignalRef,
                Delay,
                SignalRef
            ]
        );
        let delay = ast.nodes().iter().find(|n| n.kind == Delay).unwrap();
        assert_eq!(delay.value.as_deref(), Some("1"));
    }

    #[test]
    fn ids_are_preorder() {
        let ast = parse("assert property (a && b || c);").unwrap();
        assert_eq!(ast.preorder(), (0..ast.len()).collect::<Vec<_>>());
    }

    #[test]
    fn precedence_and_over_or() {
        let ast = parse("assert property (a || b && c);").unwrap();
        let top = &ast.nodes()[2];
        assert_eq!(top.value.as_deref(), Some("||"));
        assert_eq!(ast.nodes()[top.children[1]].value.as_deref(), Some("&&"));
    }

    #[test]
    fn dangling_implication_fails() {
        assert!(parse("assert property (a |->);").is_err());
    }

    #[test]
    fn label_and_disable_iff() {
        let ast = parse("p_ok: assert property (@(negedge clk) disable iff (rst) a |=> b);").unwrap();
        let prop = &ast.nodes()[1];
        assert_eq!(prop.value.as_deref(), Some("disable_iff"));
        assert_eq!(prop.children.len(), 3);
    }

    #[test]
    fn trailing_tokens_rejected() {
        assert!(parse("assert property (a); b").is_err());
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let src = format!("assert property ({}a{});", "(".repeat(5000), ")".repeat(5000));
        assert!(matches!(parse(&src), Err(ParseError::TooDeep { .. })));
        let src = format!("assert property ({}a);", "!".repeat(5000));
        assert!(matches!(parse(&src), Err(ParseError::TooDeep { .. })));
    }

    #[test]
    fn selects_and_ranges() {
        let ast = parse("assert property (a[7:0] == 8'h00 |-> ##[1:$] b[2] [*2:3]);").unwrap();
        use NodeKind::*;
        assert_eq!(
            kinds(&ast),
            vec![
                Assertion,
                Property,
                Implication,
                Comparison,
                RangeSelect,
                SignalRef,
                Literal,
                Literal,
                Literal,
                Delay,
                Repetition,
                IndexSelect,
                SignalRef,
                Literal
            ]
        );
    }
}
