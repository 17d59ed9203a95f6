use std::collections::BTreeSet;

use proptest::prelude::*;
use ragged_core::analysis::{
    classify_behavior, closed_book_verdict, gain_over_closed_book, slice_queries, GainMode,
    SliceKind, SlicePredicate, Verdict,
};
use ragged_core::dataset::{Corpus, Passage, Query, QuerySet};
use ragged_core::metrics::{
    sensitivity_scan, CurveLabel, PerformanceCurve, DEFAULT_SENSITIVITY_DELTAS,
    DEFAULT_SENSITIVITY_EPSILONS,
};
use ragged_core::retrieval::RetrievalRun;
use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};

const GRID: [u32; 6] = [1, 2, 5, 10, 20, 50];

fn curve_named(reader: &str, pairs: &[(u32, f64)]) -> PerformanceCurve {
    let label = CurveLabel {
        dataset: "d".into(),
        retriever: "r".into(),
        reader: reader.into(),
        condition: "top_k".into(),
        variant: "standard".into(),
    };
    PerformanceCurve::from_pairs(label, pairs.iter().copied()).unwrap()
}

fn on_grid(f1: [f64; 6]) -> PerformanceCurve {
    curve_named("m", &GRID.iter().copied().zip(f1).collect::<Vec<_>>())
}

#[test]
fn verdict_renderings() {
    let always_better =
        closed_book_verdict(&on_grid([31.0, 35.0, 40.0, 41.0, 40.0, 39.0]), 30.0, &GRID).unwrap();
    assert_eq!(always_better.verdict, Verdict::AlwaysBetter);
    assert_eq!(always_better.render(), "✓");

    let always_worse =
        closed_book_verdict(&on_grid([10.0, 12.0, 20.0, 30.0, 25.0, 11.0]), 30.0, &GRID).unwrap();
    assert_eq!(always_worse.verdict, Verdict::AlwaysWorse);
    assert_eq!(always_worse.render(), "✗");

    let conditional =
        closed_book_verdict(&on_grid([20.0, 28.0, 31.0, 35.0, 36.0, 33.0]), 30.0, &GRID).unwrap();
    assert_eq!(conditional.verdict, Verdict::Conditional);
    assert_eq!(conditional.condition_ks, [5, 10, 20, 50]);
    assert_eq!(conditional.render(), "only for k ≥ 5");
}

fn quarter_points() -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(0u32..=200).prop_map(|a| a.map(|v| f64::from(v) * 0.25))
}

proptest! {
    #[test]
    fn behavior_is_shift_invariant(f1 in quarter_points(), shift in 0u32..=50) {
        let base = classify_behavior(&on_grid(f1), 2.0).unwrap();
        let shifted = classify_behavior(&on_grid(f1.map(|v| v + f64::from(shift))), 2.0).unwrap();
        prop_assert_eq!(base.class, shifted.class);
        prop_assert_eq!(base.k_star, shifted.k_star);
        prop_assert_eq!(base.peak_drop, shifted.peak_drop);
    }

    #[test]
    fn always_better_means_positive_gains(f1 in quarter_points(), nc in 0u32..=200) {
        let curve = on_grid(f1);
        let nc = f64::from(nc) * 0.25;
        let verdict = closed_book_verdict(&curve, nc, &GRID).unwrap();
        let min_gain = f1.iter().map(|v| v - nc).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(verdict.verdict == Verdict::AlwaysBetter, min_gain > 0.0);
        if verdict.verdict == Verdict::AlwaysBetter {
            prop_assert!(gain_over_closed_book(&curve, nc, GainMode::Average, &GRID).unwrap() > 0.0);
            prop_assert!(gain_over_closed_book(&curve, nc, GainMode::AtOptimal, &GRID).unwrap() > 0.0);
        }
        if verdict.verdict == Verdict::AlwaysWorse {
            prop_assert!(gain_over_closed_book(&curve, nc, GainMode::AtOptimal, &GRID).unwrap() <= 0.0);
        }
    }
}

#[test]
fn sensitivity_well_separated_family_is_invariant() {
    let curves = vec![
        curve_named(
            "steep",
            &[
                (1, 10.0),
                (2, 25.0),
                (5, 45.0),
                (10, 60.0),
                (15, 61.0),
                (20, 62.0),
            ],
        ),
        curve_named(
            "moderate",
            &[
                (1, 10.0),
                (2, 14.0),
                (5, 18.0),
                (10, 21.0),
                (15, 21.5),
                (20, 22.0),
            ],
        ),
        curve_named(
            "flat",
            &[
                (1, 30.0),
                (2, 30.1),
                (5, 30.2),
                (10, 30.1),
                (15, 30.05),
                (20, 30.0),
            ],
        ),
    ];
    let report = sensitivity_scan(
        &curves,
        &DEFAULT_SENSITIVITY_EPSILONS,
        &DEFAULT_SENSITIVITY_DELTAS,
    )
    .unwrap();
    assert!(report.invariant, "{:?}", report.flips);
    assert_eq!(report.settings.len(), 6);
}

#[test]
fn sensitivity_boundary_family_flips() {
    let curves = vec![
        curve_named("edge", &[(1, 40.0), (2, 40.6), (5, 40.6), (10, 40.6)]),
        curve_named("steady", &[(1, 10.0), (2, 11.0), (5, 11.0), (10, 11.0)]),
    ];
    let report = sensitivity_scan(
        &curves,
        &DEFAULT_SENSITIVITY_EPSILONS,
        &DEFAULT_SENSITIVITY_DELTAS,
    )
    .unwrap();
    assert!(!report.invariant);
    let flip = report.flips.iter().find(|f| f.metric == "rsc").unwrap();
    assert_eq!(flip.higher, "d/r/edge/top_k/standard");
    assert_eq!(flip.lower, "d/r/steady/top_k/standard");
    assert_eq!(flip.setting.0, 0.7);
}

fn random_setup(rng: &mut StdRng) -> (Corpus, QuerySet, RetrievalRun, usize) {
    let n = rng.random_range(4..30);
    let docs = rng.random_range(1..6);
    let ids: Vec<String> = (0..n).map(|i| format!("p{i:02}")).collect();
    let corpus = Corpus::from_passages(
        ids.iter()
            .enumerate()
            .map(|(i, id)| Passage {
                passage_id: id.clone(),
                doc_id: format!("d{}", i % docs),
                title: String::new(),
                text: "t".into(),
            })
            .collect(),
    )
    .unwrap();
    let mut queries = Vec::new();
    let mut lists = Vec::new();
    for q in 0..rng.random_range(1..8) {
        let multihop = rng.random_bool(0.3);
        let gold_count = if multihop { 2 } else { rng.random_range(0..3) };
        let gold: Vec<String> = ids.choose_multiple(rng, gold_count).cloned().collect();
        queries.push(Query {
            query_id: format!("q{q}"),
            question: "?".into(),
            gold_answers: vec!["x".into()],
            gold_passage_ids: gold,
            gold_doc_ids: vec![],
            multihop,
        });
        let mut order = ids.clone();
        order.shuffle(rng);
        let list = order
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), (n - i) as f64))
            .collect();
        lists.push((format!("q{q}"), list));
    }
    let run = RetrievalRun::from_ranked_lists("r", lists).unwrap();
    (corpus, QuerySet::from_queries(queries).unwrap(), run, n)
}

#[test]
fn slices_partition_queries_and_grow_with_k() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..100 {
        let (corpus, queries, run, n) = random_setup(&mut rng);
        let all: BTreeSet<String> = queries.iter().map(|q| q.query_id.clone()).collect();
        let mut prev_found: BTreeSet<String> = BTreeSet::new();
        for k in 1..=n {
            let slice =
                |kind| slice_queries(&run, &queries, &corpus, SlicePredicate { kind, k }).unwrap();
            let found = slice(SliceKind::GoldFound);
            let none = slice(SliceKind::NoGold);
            let page = slice(SliceKind::GoldPageOnly);
            for part in [&found, &none, &page] {
                let mut union: Vec<String> = part
                    .in_slice
                    .iter()
                    .chain(&part.out_slice)
                    .chain(&part.excluded)
                    .cloned()
                    .collect();
                union.sort();
                let before = union.len();
                union.dedup();
                assert_eq!(before, union.len(), "sides overlap");
                assert_eq!(union.into_iter().collect::<BTreeSet<_>>(), all);
            }
            assert_eq!(found.in_slice, none.out_slice);
            assert!(page.in_slice.iter().all(|q| none.in_slice.contains(q)));
            let now: BTreeSet<String> = found.in_slice.iter().cloned().collect();
            assert!(prev_found.is_subset(&now));
            prev_found = now;
        }
    }
}
