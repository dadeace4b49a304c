use std::collections::BTreeSet;

use cgep_core::metrics::{
    evaluate_run, MetricsTable, PredictionLine, RankRecord, HIT_CUTOFFS,
};
use proptest::prelude::*;

/// Ranked candidate names per instance plus the gold name; the gold may be missing.
fn arb_lists() -> impl Strategy<Value = (usize, Vec<(Vec<usize>, usize)>)> {
    prop_oneof![Just(256usize), Just(512usize)].prop_flat_map(|k| {
        let one = (Just(()).prop_perturb(move |_, mut rng| {
            let mut names: Vec<usize> = (0..k).collect();
            for i in (1..k).rev() {
                names.swap(i, rng.random_range(0..=i));
            }
            let keep = rng.random_range(1..=k);
            names.truncate(keep);
            names
        }), 0..k);
        (Just(k), prop::collection::vec(one, 1..60))
    })
}

fn brute_rank(list: &[usize], gold: usize, fallback: usize) -> usize {
    let mut rank = fallback;
    for (i, name) in list.iter().enumerate() {
        if *name == gold {
            rank = i + 1;
            break;
        }
    }
    rank
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn table_matches_brute_force((k, lists) in arb_lists()) {
        let records: Vec<RankRecord> = lists
            .iter()
            .enumerate()
            .map(|(i, (list, gold))| RankRecord {
                instance_id: format!("i{i}"),
                gold_rank: list.iter().position(|n| n == gold).map(|p| p + 1),
                candidate_count: k,
            })
            .collect();
        let table = MetricsTable::compute(&records, None).unwrap();

        let ranks: Vec<usize> = lists.iter().map(|(l, g)| brute_rank(l, *g, k)).collect();
        let n = ranks.len() as f64;
        let mut recip = 0.0;
        for r in &ranks {
            recip += 1.0 / *r as f64;
        }
        prop_assert_eq!(table.mrr, 100.0 * (recip / n));
        for cut in HIT_CUTOFFS {
            let hits = ranks.iter().filter(|&&r| r <= cut).count();
            prop_assert_eq!(table.hit(cut).unwrap(), 100.0 * (hits as f64 / n));
        }
        prop_assert_eq!(table.count, ranks.len());
    }
}

#[test]
fn fallback_applies_to_absent_golds() {
    for k in [256usize, 512] {
        let records = vec![
            RankRecord {
                instance_id: "a".into(),
                gold_rank: None,
                candidate_count: k,
            },
            RankRecord {
                instance_id: "b".into(),
                gold_rank: Some(1),
                candidate_count: k,
            },
        ];
        let t = MetricsTable::compute(&records, None).unwrap();
        assert_eq!(t.mrr, 100.0 * ((1.0 / k as f64 + 1.0) / 2.0));
        assert_eq!(t.hit(50), Some(50.0));
        let explicit = MetricsTable::compute(&records, Some(512)).unwrap();
        assert_eq!(explicit.mrr, 100.0 * ((1.0 / 512.0 + 1.0) / 2.0));
    }
}

#[test]
fn fold_means() {
    let line = |id: &str, rank: usize, fold: usize| PredictionLine {
        instance_id: id.into(),
        gold_rank: Some(rank),
        candidate_count: 256,
        fold: Some(fold),
        top: Vec::new(),
    };
    let dump = vec![line("a", 1, 0), line("b", 2, 1), line("c", 4, 1)];
    let ids: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let report = evaluate_run(&dump, &ids, 2).unwrap();
    assert_eq!(report.folds.len(), 2);
    assert_eq!(report.overall.mrr, (100.0 + 100.0 * 0.375) / 2.0);
    let mut bad = dump.clone();
    bad[0].fold = None;
    assert!(evaluate_run(&bad, &ids, 2).is_err());
    bad = dump.clone();
    bad.push(line("a", 1, 0));
    assert!(evaluate_run(&bad, &ids, 2).is_err());
}
