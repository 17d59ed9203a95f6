use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ReaderAnswer, ReaderError};
use crate::dataset::QuerySet;
use crate::metrics::{unigram_f1_with, F1Options};

/// Whether a deeper retrieval actually reached the reader, and what it changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingReport {
    pub k_lo: u32,
    pub k_hi: u32,
    pub queries: usize,
    /// Fraction of queries whose deeper context carried strictly more tokens.
    pub share_with_longer_input: f64,
    /// Mean |F1(k_hi) - F1(k_lo)| per query, 0-100 scale.
    pub mean_abs_f1_delta: f64,
}

fn by_query<'a>(
    answers: &'a [ReaderAnswer],
    side: &str,
) -> Result<BTreeMap<&'a str, &'a ReaderAnswer>, ReaderError> {
    let mut map = BTreeMap::new();
    for a in answers {
        if map.insert(a.query_id.as_str(), a).is_some() {
            return Err(ReaderError::QueryMismatch(format!(
                "query {:?} appears twice in the {side} set",
                a.query_id
            )));
        }
    }
    Ok(map)
}

/// Compares two answer sets for the same queries at a shallower and a deeper
/// depth.
pub fn truncation_masking_check(
    lo: &[ReaderAnswer],
    hi: &[ReaderAnswer],
    queries: &QuerySet,
    options: F1Options,
) -> Result<MaskingReport, ReaderError> {
    let lo_map = by_query(lo, "shallow")?;
    let hi_map = by_query(hi, "deep")?;
    if lo_map.len() != hi_map.len() || lo_map.keys().any(|q| !hi_map.contains_key(q)) {
        return Err(ReaderError::QueryMismatch(format!(
            "{} shallow vs {} deep answers",
            lo_map.len(),
            hi_map.len()
        )));
    }
    if lo_map.is_empty() {
        return Err(ReaderError::QueryMismatch("no answers".into()));
    }
    let mut longer = 0usize;
    let mut delta_sum = 0.0;
    for (query_id, a_lo) in &lo_map {
        let a_hi = hi_map[query_id];
        let query = queries
            .get(query_id)
            .ok_or_else(|| ReaderError::QueryMismatch(format!("unknown query {query_id:?}")))?;
        if a_hi.context_tokens > a_lo.context_tokens {
            longer += 1;
        }
        let f_lo = unigram_f1_with(&a_lo.answer, &query.gold_answers, options)?;
        let f_hi = unigram_f1_with(&a_hi.answer, &query.gold_answers, options)?;
        delta_sum += (f_hi - f_lo).abs();
    }
    let n = lo_map.len();
    Ok(MaskingReport {
        k_lo: lo[0].k,
        k_hi: hi[0].k,
        queries: n,
        share_with_longer_input: longer as f64 / n as f64,
        mean_abs_f1_delta: delta_sum / n as f64,
    })
}
