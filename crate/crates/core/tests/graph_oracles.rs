use std::collections::BTreeSet;

use cgep_core::ecg::{
    make_instances, tail_events, undirected_distance, weakly_connected_components, CausalEdge,
    EcgError, Event, EventCausalityGraph, Span,
};
use proptest::prelude::*;

fn id(i: usize) -> String {
    format!("n{i:02}")
}

fn event(i: usize) -> Event {
    let mention = format!("m{i}");
    let sentence = format!("it {mention} now");
    Event::new(id(i), mention.clone(), sentence, Span::new(3, 3 + mention.len()), "T").unwrap()
}

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..=12).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..=24)))
}

fn find(parent: &mut [usize], x: usize) -> usize {
    if parent[x] != x {
        let root = find(parent, parent[x]);
        parent[x] = root;
    }
    parent[x]
}

fn union_find_components(n: usize, edges: &[(usize, usize)]) -> BTreeSet<BTreeSet<String>> {
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let mut groups = vec![BTreeSet::new(); n];
    for v in 0..n {
        let r = find(&mut parent, v);
        groups[r].insert(id(v));
    }
    groups.into_iter().filter(|g| !g.is_empty()).collect()
}

fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<Option<usize>>> {
    let mut d = vec![vec![None; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = Some(0);
    }
    for &(a, b) in edges {
        if a != b {
            d[a][b] = Some(1);
            d[b][a] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(x), Some(y)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|cur| x + y < cur) {
                        d[i][j] = Some(x + y);
                    }
                }
            }
        }
    }
    d
}

fn build(n: usize, edges: &[(usize, usize)]) -> EventCausalityGraph {
    EventCausalityGraph::new(
        "doc",
        "doc#0",
        (0..n).map(event).collect(),
        edges.iter().map(|&(a, b)| CausalEdge::new(id(a), id(b))).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn components_match_union_find((n, edges) in arb_graph()) {
        let nodes: Vec<Event> = (0..n).map(event).collect();
        let causal: Vec<CausalEdge> = edges.iter().map(|&(a, b)| CausalEdge::new(id(a), id(b))).collect();
        let comps = weakly_connected_components("doc", &nodes, &causal).unwrap();
        let ours: BTreeSet<BTreeSet<String>> = comps
            .iter()
            .map(|g| g.nodes.iter().map(|e| e.event_id.clone()).collect())
            .collect();
        prop_assert_eq!(ours, union_find_components(n, &edges));
        // every non-loop edge lands in exactly one component
        let total: usize = comps.iter().map(|g| g.edge_count()).sum();
        let distinct: BTreeSet<(usize, usize)> = edges.iter().copied().filter(|(a, b)| a != b).collect();
        prop_assert_eq!(total, distinct.len());
        for g in &comps {
            prop_assert!(g.is_weakly_connected());
        }
    }

    #[test]
    fn distances_match_floyd_warshall((n, edges) in arb_graph()) {
        let g = build(n, &edges);
        let fw = floyd_warshall(n, &edges);
        for (i, row) in fw.iter().enumerate() {
            for (j, expected) in row.iter().enumerate() {
                match (undirected_distance(&g, &id(i), &id(j)), expected) {
                    (Ok(d), Some(e)) => prop_assert_eq!(d, *e),
                    (Err(EcgError::Unreachable { .. }), None) => {}
                    (got, want) => prop_assert!(false, "{i}->{j}: {got:?} vs {want:?}"),
                }
            }
        }
    }

    #[test]
    fn instances_enumerate_tail_in_edges((n, edges) in arb_graph()) {
        let g = build(n, &edges);
        let distinct: BTreeSet<(usize, usize)> = edges.iter().copied().filter(|(a, b)| a != b).collect();
        let tails: BTreeSet<String> = (0..n)
            .filter(|&v| !distinct.iter().any(|&(a, _)| a == v))
            .map(id)
            .collect();
        prop_assert_eq!(&tail_events(&g), &tails);
        let expected: BTreeSet<(String, String)> = distinct
            .iter()
            .filter(|(_, b)| tails.contains(&id(*b)))
            .map(|&(a, b)| (id(b), id(a)))
            .collect();
        let drafts = make_instances(&g);
        let got: Vec<(String, String)> = drafts
            .iter()
            .map(|d| (d.gold.event_id.clone(), d.anchor_id.clone()))
            .collect();
        let sorted: Vec<(String, String)> = expected.into_iter().collect();
        prop_assert_eq!(got, sorted);
        for d in &drafts {
            prop_assert!(!d.graph.contains(&d.gold.event_id));
            prop_assert_eq!(d.graph.node_count(), n - 1);
        }
    }
}
