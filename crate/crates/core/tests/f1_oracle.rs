use proptest::prelude::*;
use ragged_core::metrics::unigram_f1;

const PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

fn oracle_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !PUNCT.contains(*c))
        .collect();
    let mut toks: Vec<String> = cleaned
        .split_whitespace()
        .filter(|t| !["a", "an", "the"].contains(t))
        .map(String::from)
        .collect();
    toks.sort();
    toks
}

/// Overlap count of two sorted token lists by merging.
fn overlap(a: &[String], b: &[String]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    c
}

/// F1 as the exact rational 2PR/(P+R) = 2c/(|p|+|g|), scaled by 100 and
/// rounded once.
fn oracle_f1(pred: &str, golds: &[&str]) -> f64 {
    let p = oracle_tokens(pred);
    golds
        .iter()
        .map(|g| {
            let g = oracle_tokens(g);
            match (p.is_empty(), g.is_empty()) {
                (true, true) => 100.0,
                (true, false) | (false, true) => 0.0,
                _ => (200 * overlap(&p, &g)) as f64 / (p.len() + g.len()) as f64,
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn engine(pred: &str, golds: &[&str]) -> f64 {
    let golds: Vec<String> = golds.iter().map(|s| s.to_string()).collect();
    unigram_f1(pred, &golds).unwrap()
}

// (prediction, golds, expected numerator, expected denominator)
const CASES: [(&str, &[&str], u32, u32); 20] = [
    ("The Blue Whale.", &["blue whale"], 100, 1),
    ("whale shark", &["blue whale"], 50, 1),
    ("paris", &["Paris, France", "Paris"], 100, 1),
    ("", &["the"], 100, 1),
    ("", &["x"], 0, 1),
    ("x x x", &["x"], 50, 1),
    ("Barack Obama", &["Obama"], 200, 3),
    ("the United States of America", &["United States"], 200, 3),
    ("1990", &["in 1990"], 200, 3),
    ("a cat and a dog", &["dog and cat"], 100, 1),
    ("New York City", &["new york", "york city"], 80, 1),
    ("It's raining.", &["its raining"], 100, 1),
    ("U.S.A.", &["usa"], 100, 1),
    ("Hello, world!", &["goodbye world"], 50, 1),
    ("one two three four", &["five six"], 0, 1),
    ("An Apple", &["apple pie"], 200, 3),
    ("red red blue", &["red blue blue"], 200, 3),
    ("The", &["a"], 100, 1),
    ("Mount Everest", &["Everest", "K2"], 200, 3),
    ("  café   au lait ", &["Café au lait"], 100, 1),
];

#[test]
fn hand_cases_match_oracle_exactly() {
    for (pred, golds, num, den) in CASES {
        let expected = f64::from(num) / f64::from(den);
        assert_eq!(oracle_f1(pred, golds), expected, "oracle on {pred:?}");
        assert_eq!(engine(pred, golds), expected, "engine on {pred:?}");
    }
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            Just("the"),
            Just("A"),
            Just("an"),
            Just("whale"),
            Just("Whale"),
            Just("krill"),
            Just("blue,"),
            Just("(sea)"),
            Just("x"),
            Just("x."),
            Just("--"),
            Just("é"),
            Just("42"),
        ],
        0..8,
    )
    .prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn matches_oracle_and_stays_in_range(pred in text(), gold in text(), gold2 in text()) {
        let f = engine(&pred, &[&gold, &gold2]);
        prop_assert_eq!(f, oracle_f1(&pred, &[&gold, &gold2]));
        prop_assert!((0.0..=100.0).contains(&f));
    }

    #[test]
    fn hundred_iff_equal_multisets(pred in text(), gold in text()) {
        let f = engine(&pred, &[&gold]);
        prop_assert_eq!(f == 100.0, oracle_tokens(&pred) == oracle_tokens(&gold));
    }

    #[test]
    fn symmetric_for_single_gold(a in text(), b in text()) {
        prop_assert_eq!(engine(&a, &[&b]), engine(&b, &[&a]));
    }
}
