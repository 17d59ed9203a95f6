use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::dataset::{Corpus, Query, QuerySet};
use crate::retrieval::RetrievalRun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallLevel {
    Passage,
    Document,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub level: RecallLevel,
    pub k: usize,
    /// Mean per-query recall on the 0-100 scale; `None` when no query has
    /// gold ids at this level.
    pub recall: Option<f64>,
    pub scored_queries: usize,
    /// Queries skipped because they carry no gold ids at this level.
    pub excluded_queries: Vec<String>,
}

/// Gold ids of a query at the requested granularity. Document-level gold is
/// the union of `gold_doc_ids` and the documents of known gold passages.
fn gold_ids(query: &Query, corpus: &Corpus, level: RecallLevel) -> BTreeSet<String> {
    match level {
        RecallLevel::Passage => query.gold_passage_ids.iter().cloned().collect(),
        RecallLevel::Document => query
            .gold_doc_ids
            .iter()
            .cloned()
            .chain(
                query
                    .gold_passage_ids
                    .iter()
                    .filter_map(|p| corpus.doc_of(p).map(str::to_owned)),
            )
            .collect(),
    }
}

pub fn recall_at_k(
    run: &RetrievalRun,
    queries: &QuerySet,
    corpus: &Corpus,
    k: usize,
    level: RecallLevel,
) -> Result<RecallReport, MetricsError> {
    if k < 1 {
        return Err(MetricsError::InvalidDepth(k));
    }
    let mut total = 0.0;
    let mut scored = 0usize;
    let mut excluded = Vec::new();
    for query in queries {
        let gold = gold_ids(query, corpus, level);
        if gold.is_empty() {
            excluded.push(query.query_id.clone());
            continue;
        }
        let retrieved: BTreeSet<String> = run
            .top_k(&query.query_id, k)
            .iter()
            .filter_map(|e| match level {
                RecallLevel::Passage => Some(e.passage_id.clone()),
                RecallLevel::Document => corpus.doc_of(&e.passage_id).map(str::to_owned),
            })
            .collect();
        let hits = gold.intersection(&retrieved).count();
        total += hits as f64 / gold.len() as f64;
        scored += 1;
    }
    Ok(RecallReport {
        level,
        k,
        recall: (scored > 0).then(|| 100.0 * total / scored as f64),
        scored_queries: scored,
        excluded_queries: excluded,
    })
}
