// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use svacov_core::sva::{parse_assertion, tokenize, Ast};

fn ident() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("req".to_string()),
        Just("gnt".to_string()),
        Just("valid".to_string()),
        Just("data".to_string()),
        Just("u_top.state".to_string()),
        "[a-z][a-z0-9_]{0,6}".prop_filter("keywords are not signals", |s| {
            !matches!(
                s.as_str(),
                "assert" | "property" | "posedge" | "negedge" | "disable" | "iff" | "or" | "and" | "not" | "edge"
            )
        }),
    ]
}

fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        4 => ident(),
        1 => (0u32..64).prop_map(|n| n.to_string()),
        1 => Just("4'hF".to_string()),
        1 => (ident(), 0u32..8).prop_map(|(s, i)| format!("{s}[{i}]")),
        1 => (ident(), 4u32..8, 0u32..4).prop_map(|(s, h, l)| format!("{s}[{h}:{l}]")),
        1 => (prop_oneof![Just("$rose"), Just("$fell"), Just("$stable"), Just("$past")], ident())
            .prop_map(|(f, s)| format!("{f}({s})")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| format!("({e})")),
            inner.clone().prop_map(|e| format!("!({e})")),
            (
                inner.clone(),
                prop_oneof![Just("&&"), Just("||"), Just("&"), Just("|"), Just("^")],
                inner.clone()
            )
                .prop_map(|(a, op, b)| format!("{a} {op} {b}")),
            (
                inner.clone(),
                prop_oneof![Just("=="), Just("!="), Just("<"), Just(">=")],
                inner
            )
                .prop_map(|(a, op, b)| format!("({a}) {op} ({b})")),
        ]
    })
}

fn sequence() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => expr(),
        1 => (expr(), 0u32..4, expr()).prop_map(|(a, d, b)| format!("{a} ##{d} {b}")),
        1 => (expr(), 1u32..3, 3u32..6, expr()).prop_map(|(a, l, h, b)| format!("{a} ##[{l}:{h}] {b}")),
        1 => (expr(), 1u32..4).prop_map(|(a, n)| format!("({a}) [*{n}]")),
    ]
}

fn assertion() -> impl Strategy<Value = String> {
    let property = prop_oneof![
        1 => sequence(),
        2 => (sequence(), prop_oneof![Just("|->"), Just("|=>")], sequence()).prop_map(|(a, op, b)| format!("{a} {op} {b}")),
    ];
    (
        proptest::option::of("[a-z][a-z0-9_]{0,5}"),
        proptest::option::of(prop_oneof![Just("posedge"), Just("negedge")]),
        proptest::option::of(ident()),
        property,
    )
        .prop_map(|(label, edge, rst, prop)| {
            let mut s = String::new();
            if let Some(l) = label {
                s.push_str(&format!("lbl_{l}: "));
            }
            s.push_str("assert property (");
            if let Some(e) = edge {
                s.push_str(&format!("@({e} clk) "));
            }
            if let Some(r) = rst {
                s.push_str(&format!("disable iff ({r}) "));
            }
            s.push_str(&prop);
            s.push_str(");");
            s
        })
}

fn ast(src: &str) -> Ast {
    let pa = parse_assertion("p", src).unwrap();
    assert!(pa.syntax_ok, "{src:?} rejected: {:?}", pa.diagnostic);
    pa.ast.unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pretty_print_round_trips(src in assertion()) {
        let a = ast(&src);
        let printed = a.pretty();
        let b = ast(&printed);
        prop_assert!(a.structurally_eq(&b), "{src}\n{printed}");
        prop_assert_eq!(b.pretty(), printed);
    }

    #[test]
    fn whitespace_and_comments_do_not_matter(src in assertion(), seps in proptest::collection::vec(0usize..4, 64)) {
        let tokens = tokenize(&src).unwrap();
        let mut noisy = String::new();
        for (i, t) in tokens.iter().enumerate() {
            noisy.push_str(&t.lexeme);
            noisy.push_str(match seps[i % seps.len()] {
                0 => " ",
                1 => "\n\t ",
                2 => " /* x */ ",
                _ => " // note\n",
            });
        }
        let a = ast(&src);
        let b = ast(&noisy);
        prop_assert!(a.structurally_eq(&b), "{src}\n{noisy}");
        prop_assert_eq!(
            parse_assertion("p", &src).unwrap().signals,
            parse_assertion("p", &noisy).unwrap().signals
        );
    }

    #[test]
    fn token_spans_cover_source(src in assertion()) {
        let tokens = tokenize(&src).unwrap();
        let mut pos = 0;
        for t in &tokens {
            prop_assert!(t.span.start >= pos && t.span.end > t.span.start);
            prop_assert!(src[pos..t.span.start].trim().is_empty());
            prop_assert_eq!(&src[t.span.start..t.span.end], t.lexeme.as_str());
            pos = t.span.end;
        }
        prop_assert!(src[pos..].trim().is_empty());
    }

    #[test]
    fn parser_never_panics(src in "\\PC{0,80}") {
        let pa = parse_assertion("f", &src).unwrap();
        prop_assert_eq!(pa.syntax_ok, pa.ast.is_some());
        prop_assert_eq!(pa.syntax_ok, pa.diagnostic.is_none());
        if !pa.syntax_ok {
            prop_assert!(pa.signals.is_empty());
        }
    }

    #[test]
    fn parser_never_panics_on_near_misses(src in assertion(), cut in 0usize..200, junk in "[()\\[\\]#|&!:;$*@ ]{0,4}") {
        let at = src.char_indices().map(|(i, _)| i).nth(cut % src.len().max(1)).unwrap_or(0);
        let mutated = format!("{}{junk}{}", &src[..at], &src[at..]);
        let pa = parse_assertion("f", &mutated).unwrap();
        prop_assert_eq!(pa.syntax_ok, pa.ast.is_some());
    }

    #[test]
    fn preorder_ids_are_dense(src in assertion()) {
        let a = ast(&src);
        prop_assert_eq!(a.preorder(), (0..a.len()).collect::<Vec<_>>());
        for n in a.nodes() {
            for &c in &n.children {
                prop_assert_eq!(a.parent(c), Some(n.id));
            }
        }
    }
}
