// SPDX-License-Identifier: Apache-2.0

//! Expression tree for parsed assertions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lexer::Span;

pub type NodeId = usize;

/// Node kinds with their fixed integer codes. The codes feed path vectors
/// and must stay stable across releases; `0` is reserved as the pad value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Assertion = 1,
    Property = 2,
    ClockingEvent = 3,
    Implication = 4,
    Delay = 5,
    Repetition = 6,
    BooleanOp = 7,
    Comparison = 8,
    UnaryOp = 9,
    SignalRef = 10,
    IndexSelect = 11,
    RangeSelect = 12,
    Literal = 13,
    SystemFunc = 14,
    Sequence = 15,
}

impl NodeKind {
    pub const ALL: [NodeKind; 15] = [
        NodeKind::Assertion,
        NodeKind::Property,
        NodeKind::ClockingEvent,
        NodeKind::Implication,
        NodeKind::Delay,
        NodeKind::Repetition,
        NodeKind::BooleanOp,
        NodeKind::Comparison,
        NodeKind::UnaryOp,
        NodeKind::SignalRef,
        NodeKind::IndexSelect,
        NodeKind::RangeSelect,
        NodeKind::Literal,
        NodeKind::SystemFunc,
        NodeKind::Sequence,
    ];

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<NodeKind> {
        NodeKind::ALL.iter().copied().find(|k| k.code() == code)
    }

    /// Kinds that must not have children.
    pub fn is_leaf_kind(self) -> bool {
        matches!(self, NodeKind::SignalRef | NodeKind::Literal)
    }
}

/// `value` carries the kind-specific payload: the operator lexeme, the
/// signal or function name, the literal text, the delay/repetition range,
/// the clock edge, or `disable_iff` on a property with a disable clause.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub children: Vec<NodeId>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AstError {
    #[error("tree has no nodes")]
    Empty,
    #[error("node at position {position} has id {id}; ids must be dense and positional")]
    NonDenseId { position: usize, id: NodeId },
    #[error("node {parent} references missing child {child}")]
    DanglingChild { parent: NodeId, child: NodeId },
    #[error("node {0} has more than one parent")]
    MultipleParents(NodeId),
    #[error("expected exactly one root, found {0}")]
    RootCount(usize),
    #[error("tree contains a cycle or unreachable nodes")]
    Unreachable,
    #[error("{kind:?} node {id} must be a leaf")]
    LeafWithChildren { id: NodeId, kind: NodeKind },
}

/// A validated rooted tree of [`AstNode`]s stored as a dense arena.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AstRepr", into = "AstRepr")]
pub struct Ast {
    nodes: Vec<AstNode>,
    root: NodeId,
    parents: Vec<Option<NodeId>>,
    depths: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct AstRepr {
    root: NodeId,
    nodes: Vec<AstNode>,
}

impl TryFrom<AstRepr> for Ast {
    type Error = AstError;

    fn try_from(repr: AstRepr) -> Result<Self, AstError> {
        let ast = Ast::from_nodes(repr.nodes)?;
        if ast.root != repr.root {
            return Err(AstError::RootCount(0));
        }
        Ok(ast)
    }
}

impl From<Ast> for AstRepr {
    fn from(ast: Ast) -> Self {
        AstRepr {
            root: ast.root,
            nodes: ast.nodes,
        }
    }
}

impl Ast {
    /// Validates the tree invariants and precomputes parent and depth tables.
    pub fn from_nodes(nodes: Vec<AstNode>) -> Result<Ast, AstError> {
        if nodes.is_empty() {
            return Err(AstError::Empty);
        }
        let n = nodes.len();
        let mut parents = vec![None; n];
        for (pos, node) in nodes.iter().enumerate() {
            if node.id != pos {
                return Err(AstError::NonDenseId {
                    position: pos,
                    id: node.id,
                });
            }
            if node.kind.is_leaf_kind() && !node.children.is_empty() {
                return Err(AstError::LeafWithChildren {
                    id: node.id,
                    kind: node.kind,
                });
            }
            for &child in &node.children {
                if child >= n {
                    return Err(AstError::DanglingChild { parent: node.id, child });
                }
                if parents[child].is_some() || child == node.id {
                    return Err(AstError::MultipleParents(child));
                }
                parents[child] = Some(node.id);
            }
        }
        let roots: Vec<NodeId> = (0..n).filter(|&i| parents[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(AstError::RootCount(roots.len()));
        }
        let root = roots[0];

        let mut depths = vec![usize::MAX; n];
        let mut stack = vec![(root, 0usize)];
        let mut seen = 0;
        while let Some((id, depth)) = stack.pop() {
            depths[id] = depth;
            seen += 1;
            for &child in &nodes[id].children {
                stack.push((child, depth + 1));
            }
        }
        if seen != n {
            return Err(AstError::Unreachable);
        }

        Ok(Ast {
            nodes,
            root,
            parents,
            depths,
        })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&AstNode> {
        self.nodes.get(id)
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents.get(id).copied().flatten()
    }

    pub fn depth(&self, id: NodeId) -> Option<usize> {
        self.depths.get(id).copied()
    }

    /// Node ids in pre-order (parent before children, children in source order).
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.nodes[id].children.iter().rev());
        }
        out
    }

    /// `signal_ref` leaves in source (pre-order) order, one per occurrence.
    pub fn signal_leaves(&self) -> Vec<NodeId> {
        self.preorder()
            .into_iter()
            .filter(|&id| self.nodes[id].kind == NodeKind::SignalRef)
            .collect()
    }

    /// Compares kinds, values and child structure, ignoring ids and spans.
    pub fn structurally_eq(&self, other: &Ast) -> bool {
        fn eq(a: &Ast, x: NodeId, b: &Ast, y: NodeId) -> bool {
            let (nx, ny) = (&a.nodes[x], &b.nodes[y]);
            nx.kind == ny.kind
                && nx.value == ny.value
                && nx.children.len() == ny.children.len()
                && nx.children.iter().zip(&ny.children).all(|(&cx, &cy)| eq(a, cx, b, cy))
        }
        eq(self, self.root, other, other.root)
    }

    /// Renders the tree back to assertion source. Binary operators are fully
    /// parenthesized so that re-parsing yields the same tree.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        self.render(self.root, &mut out);
        out
    }

    fn render(&self, id: NodeId, out: &mut String) {
        let node = &self.nodes[id];
        let value = node.value.as_deref().unwrap_or("");
        let kids = &node.children;
        match node.kind {
            NodeKind::Assertion => {
                out.push_str("assert property (");
                for &c in kids {
                    self.render(c, out);
                }
                out.push_str(");");
            }
            NodeKind::Property => {
                let mut rest = kids.as_slice();
                if let Some((&first, tail)) = rest.split_first() {
                    if self.nodes[first].kind == NodeKind::ClockingEvent {
                        self.render(first, out);
                        out.push(' ');
                        rest = tail;
                    }
                }
                if value == "disable_iff" {
                    if let Some((&cond, tail)) = rest.split_first() {
                        out.push_str("disable iff (");
                        self.render(cond, out);
                        out.push_str(") ");
                        rest = tail;
                    }
                }
                for &c in rest {
                    self.render(c, out);
                }
            }
            NodeKind::ClockingEvent => {
                out.push_str("@(");
                if !value.is_empty() {
                    out.push_str(value);
                    out.push(' ');
                }
                for &c in kids {
                    self.render(c, out);
                }
                out.push(')');
            }
            NodeKind::Implication => {
                self.render(kids[0], out);
                out.push(' ');
                out.push_str(value);
                out.push(' ');
                self.render(kids[1], out);
            }
            NodeKind::Sequence => {
                out.push('(');
                for (i, &c) in kids.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    self.render(c, out);
                }
                out.push(')');
            }
            NodeKind::Delay => {
                out.push_str("##");
                out.push_str(value);
                out.push(' ');
                self.render(kids[0], out);
            }
            NodeKind::Repetition => {
                out.push('(');
                self.render(kids[0], out);
                out.push_str(")[*");
                out.push_str(value);
                out.push(']');
            }
            NodeKind::BooleanOp | NodeKind::Comparison => {
                out.push('(');
                self.render(kids[0], out);
                out.push(' ');
                out.push_str(value);
                out.push(' ');
                self.render(kids[1], out);
                out.push(')');
            }
            NodeKind::UnaryOp => {
                out.push_str(value);
                out.push('(');
                self.render(kids[0], out);
                out.push(')');
            }
            NodeKind::SignalRef | NodeKind::Literal => out.push_str(value),
            NodeKind::IndexSelect => {
                self.render(kids[0], out);
                out.push('[');
                self.render(kids[1], out);
                out.push(']');
            }
            NodeKind::RangeSelect => {
                self.render(kids[0], out);
                out.push('[');
                self.render(kids[1], out);
                out.push(':');
                self.render(kids[2], out);
                out.push(']');
            }
            NodeKind::SystemFunc => {
                out.push_str(value);
                if !kids.is_empty() {
                    out.push('(');
                    for (i, &c) in kids.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        self.render(c, out);
                    }
                    out.push(')');
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: NodeId, kind: NodeKind, children: Vec<NodeId>) -> AstNode {
        AstNode {
            id,
            kind,
            value: None,
            children,
            span: Span::new(0, 0),
        }
    }

    #[test]
    fn codes_are_fixed() {
        let codes: Vec<u32> = NodeKind::ALL.iter().map(|k| k.code()).collect();
        assert_eq!(codes, (1..=15).collect::<Vec<_>>());
        assert_eq!(NodeKind::from_code(10), Some(NodeKind::SignalRef));
        assert_eq!(NodeKind::from_code(0), None);
    }

    #[test]
    fn rejects_two_roots() {
        let nodes = vec![
            node(0, NodeKind::Property, vec![]),
            node(1, NodeKind::SignalRef, vec![]),
        ];
        assert_eq!(Ast::from_nodes(nodes).unwrap_err(), AstError::RootCount(2));
    }

    #[test]
    fn rejects_shared_child() {
        let nodes = vec![
            node(0, NodeKind::BooleanOp, vec![1, 2]),
            node(1, NodeKind::BooleanOp, vec![2]),
            node(2, NodeKind::SignalRef, vec![]),
        ];
        assert_eq!(Ast::from_nodes(nodes).unwrap_err(), AstError::MultipleParents(2));
    }

    #[test]
    fn rejects_cycle() {
        let nodes = vec![
            node(0, NodeKind::Property, vec![1]),
            node(1, NodeKind::BooleanOp, vec![2]),
            node(2, NodeKind::BooleanOp, vec![1]),
        ];
        assert!(Ast::from_nodes(nodes).is_err());
    }

    #[test]
    fn rejects_signal_with_children() {
        let nodes = vec![
            node(0, NodeKind::SignalRef, vec![1]),
            node(1, NodeKind::Literal, vec![]),
        ];
        assert!(matches!(
            Ast::from_nodes(nodes),
            Err(AstError::LeafWithChildren { id: 0, .. })
        ));
    }

    #[test]
    fn depth_and_parent_tables() {
        let nodes = vec![
            node(0, NodeKind::Assertion, vec![1]),
            node(1, NodeKind::Property, vec![2]),
            node(2, NodeKind::BooleanOp, vec![3, 4]),
            node(3, NodeKind::SignalRef, vec![]),
            node(4, NodeKind::SignalRef, vec![]),
        ];
        let ast = Ast::from_nodes(nodes).unwrap();
        assert_eq!(ast.depth(4), Some(3));
        assert_eq!(ast.parent(3), Some(2));
        assert_eq!(ast.parent(0), None);
        assert_eq!(ast.signal_leaves(), vec![3, 4]);
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let nodes = vec![
            node(0, NodeKind::Property, vec![1]),
            node(1, NodeKind::SignalRef, vec![]),
        ];
        let ast = Ast::from_nodes(nodes).unwrap();
        let json = serde_json::to_string(&ast).unwrap();
        let back: Ast = serde_json::from_str(&json).unwrap();
        assert_eq!(ast, back);

        let broken = json.replace("\"children\":[1]", "\"children\":[7]");
        assert!(serde_json::from_str::<Ast>(&broken).is_err());
    }
}
