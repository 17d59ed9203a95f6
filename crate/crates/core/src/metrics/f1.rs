use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct F1Options {
    /// Lowercase, drop ASCII punctuation, drop the articles a/an/the and
    /// collapse whitespace before splitting.
    pub normalize: bool,
}

impl Default for F1Options {
    fn default() -> Self {
        Self { normalize: true }
    }
}

/// SQuAD-style answer normalization.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn answer_tokens(text: &str, options: F1Options) -> Vec<String> {
    if options.normalize {
        normalize_answer(text)
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect()
    } else {
        text.split_whitespace().map(str::to_owned).collect()
    }
}

/// F1 between two token multisets on the 0-100 scale.
///
/// Two empty sequences score 100; exactly one empty sequence scores 0.
pub fn token_f1(prediction: &[String], gold: &[String]) -> f64 {
    if prediction.is_empty() && gold.is_empty() {
        return 100.0;
    }
    if prediction.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for token in gold {
        *gold_counts.entry(token).or_default() += 1;
    }
    let mut common = 0usize;
    for token in prediction {
        if let Some(count) = gold_counts.get_mut(token.as_str()) {
            if *count > 0 {
                *count -= 1;
                common += 1;
            }
        }
    }
    // 2PR/(P+R) with P = c/|pred| and R = c/|gold| reduces to 2c/(|pred|+|gold|)
    200.0 * common as f64 / (prediction.len() + gold.len()) as f64
}

/// Best unigram F1 of `prediction` against any of `gold_answers`, 0-100.
pub fn unigram_f1(prediction: &str, gold_answers: &[String]) -> Result<f64, MetricsError> {
    unigram_f1_with(prediction, gold_answers, F1Options::default())
}

pub fn unigram_f1_with(
    prediction: &str,
    gold_answers: &[String],
    options: F1Options,
) -> Result<f64, MetricsError> {
    if gold_answers.is_empty() {
        return Err(MetricsError::EmptyGoldAnswers);
    }
    let pred = answer_tokens(prediction, options);
    Ok(gold_answers
        .iter()
        .map(|gold| token_f1(&pred, &answer_tokens(gold, options)))
        .fold(f64::NEG_INFINITY, f64::max))
}
