use cgep_core::ecg::{CausalEdge, Event, EventCausalityGraph, Span};
use cgep_core::linearize::{
    assign_distances, extract_triples, linearize, order_triples, render, TripleOrder,
};
use cgep_core::tokenize::{Tokenizer, WordTokenizer};
use proptest::prelude::*;

const WORDS: [&str; 6] = ["storm", "flood", "power cut", "mass evacuation", "aid", "x"];
const TYPES: [&str; 4] = ["Damage", "Natural disaster", "Movement", "Aid"];

#[derive(Debug, Clone)]
struct Case {
    n: usize,
    edges: Vec<(usize, usize)>,
    words: Vec<usize>,
    types: Vec<usize>,
    anchor: usize,
    budget: usize,
}

fn arb_case() -> impl Strategy<Value = Case> {
    (2usize..=10).prop_flat_map(|n| {
        (
            prop::collection::vec(any::<prop::sample::Index>(), n - 1),
            prop::collection::vec((0..n, 0..n), 0..8),
            prop::collection::vec(0..WORDS.len(), n),
            prop::collection::vec(0..TYPES.len(), n),
            0..n,
            8usize..80,
        )
            .prop_map(move |(parents, extra, words, types, anchor, budget)| {
                let mut edges: Vec<(usize, usize)> = parents
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (p.index(i + 1), i + 1))
                    .collect();
                edges.extend(extra);
                Case {
                    n,
                    edges,
                    words,
                    types,
                    anchor,
                    budget,
                }
            })
    })
}

fn graph(c: &Case) -> EventCausalityGraph {
    let nodes = (0..c.n)
        .map(|i| {
            let mention = WORDS[c.words[i]];
            let sentence = format!("so {mention} .");
            Event::new(
                format!("e{i}"),
                mention,
                sentence,
                Span::new(3, 3 + mention.chars().count()),
                TYPES[c.types[i]],
            )
            .unwrap()
        })
        .collect();
    let edges = c
        .edges
        .iter()
        .map(|&(a, b)| CausalEdge::new(format!("e{a}"), format!("e{b}")))
        .collect();
    EventCausalityGraph::new("d", "d#0", nodes, edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn template_invariants(c in arb_case()) {
        let g = graph(&c);
        let tok = WordTokenizer::default();
        let anchor = format!("e{}", c.anchor);
        let ordered = order_triples(assign_distances(extract_triples(&g), &g, &anchor).unwrap()).unwrap();

        // non-increasing distance, ties in extraction order
        for w in ordered.windows(2) {
            let (a, b) = (w[0].distance.unwrap(), w[1].distance.unwrap());
            prop_assert!(a >= b);
            if a == b {
                prop_assert!(w[0].source_edge() < w[1].source_edge());
            }
        }

        let lin = match linearize(&g, &anchor, TripleOrder::Distance, Some(c.budget), &tok) {
            Ok(l) => l,
            Err(_) => {
                let prompt = 1 + tok.pieces(&g.node(&anchor).unwrap().mention).len() + 3;
                prop_assert!(prompt > c.budget);
                return Ok(());
            }
        };
        let m = &lin.mention;
        prop_assert!(m.len() <= c.budget);
        prop_assert_eq!(&m.segments[..], &ordered[m.dropped..]);
        if m.dropped > 0 {
            let t = &ordered[m.dropped - 1];
            let size = tok.pieces(&t.cause_mention).len() + 1 + tok.pieces(&t.effect_mention).len() + 1;
            prop_assert!(m.len() + size > c.budget);
        }
        let full = render(&g, ordered.clone(), &anchor, None, &tok).unwrap();
        prop_assert_eq!(full.len() - m.len() >= m.dropped * 4, true);
        prop_assert_eq!(&m.tokens[m.mask_position], "[MASK]");
        prop_assert_eq!(m.tokens.iter().filter(|t| *t == "[MASK]").count(), 1);

        // schema template mirrors the mention template occurrence by occurrence
        let s = &lin.schema;
        prop_assert_eq!(s.occurrences.len(), m.occurrences.len());
        prop_assert_eq!(m.occurrences.len(), 2 * m.segments.len() + 1);
        for (a, b) in m.occurrences.iter().zip(&s.occurrences) {
            prop_assert_eq!(&a.event_id, &b.event_id);
            prop_assert_eq!(a.segment, b.segment);
            prop_assert!(!a.positions.is_empty() && !b.positions.is_empty());
            let ev = g.node(&a.event_id).unwrap();
            let mention: Vec<&str> = a.positions.iter().map(|&p| m.tokens[p].as_str()).collect();
            prop_assert_eq!(mention, tok.pieces(&ev.mention));
            let ty: Vec<&str> = b.positions.iter().map(|&p| s.tokens[p].as_str()).collect();
            prop_assert_eq!(ty, tok.pieces(&ev.event_type));
        }
        prop_assert_eq!(&m.occurrences.last().unwrap().event_id, &anchor);
    }

    #[test]
    fn chains_linearize_in_path_order(n in 2usize..10) {
        let c = Case {
            n,
            edges: (0..n - 1).map(|i| (i, i + 1)).collect(),
            words: vec![0; n],
            types: vec![0; n],
            anchor: n - 1,
            budget: 1000,
        };
        let g = graph(&c);
        let lin = linearize(&g, &format!("e{}", n - 1), TripleOrder::Distance, None, &WordTokenizer::default()).unwrap();
        let causes: Vec<String> = lin.mention.segments.iter().map(|t| t.cause_id.clone()).collect();
        let expected: Vec<String> = (0..n - 1).map(|i| format!("e{i}")).collect();
        prop_assert_eq!(causes, expected);
    }
}
