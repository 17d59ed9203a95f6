use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::dataset::{Corpus, Query, QuerySet};
use crate::retrieval::RetrievalRun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKind {
    /// Top-k holds the gold evidence (any gold passage, or all of them for
    /// multi-hop queries).
    GoldFound,
    /// Complement of `GoldFound`.
    NoGold,
    /// No gold passage in top-k, but some passage from a gold document.
    GoldPageOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultihopRule {
    AnyGold,
    AllGold,
}

impl MultihopRule {
    pub fn for_query(query: &Query) -> Self {
        if query.multihop {
            MultihopRule::AllGold
        } else {
            MultihopRule::AnyGold
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlicePredicate {
    pub kind: SliceKind,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePartition {
    pub kind: SliceKind,
    pub k: usize,
    pub in_slice: Vec<String>,
    pub out_slice: Vec<String>,
    /// Queries without gold passages; they belong to neither side.
    pub excluded: Vec<String>,
}

fn gold_found(query: &Query, top: &BTreeSet<&str>) -> bool {
    let mut gold = query
        .gold_passage_ids
        .iter()
        .map(|g| top.contains(g.as_str()));
    match MultihopRule::for_query(query) {
        MultihopRule::AnyGold => gold.any(|hit| hit),
        MultihopRule::AllGold => gold.all(|hit| hit),
    }
}

pub fn slice_queries(
    run: &RetrievalRun,
    queries: &QuerySet,
    corpus: &Corpus,
    predicate: SlicePredicate,
) -> Result<SlicePartition, AnalysisError> {
    if predicate.k == 0 || run.max_k() < predicate.k {
        return Err(AnalysisError::RunTooShallow {
            max_k: run.max_k(),
            k: predicate.k,
        });
    }
    let mut partition = SlicePartition {
        kind: predicate.kind,
        k: predicate.k,
        in_slice: Vec::new(),
        out_slice: Vec::new(),
        excluded: Vec::new(),
    };
    for query in queries {
        if query.gold_passage_ids.is_empty() {
            partition.excluded.push(query.query_id.clone());
            continue;
        }
        let top: BTreeSet<&str> = run
            .top_k(&query.query_id, predicate.k)
            .iter()
            .map(|e| e.passage_id.as_str())
            .collect();
        let member = match predicate.kind {
            SliceKind::GoldFound => gold_found(query, &top),
            SliceKind::NoGold => !gold_found(query, &top),
            SliceKind::GoldPageOnly => {
                let any_gold_passage = query
                    .gold_passage_ids
                    .iter()
                    .any(|g| top.contains(g.as_str()));
                let gold_docs: BTreeSet<&str> = query
                    .gold_doc_ids
                    .iter()
                    .map(String::as_str)
                    .chain(
                        query
                            .gold_passage_ids
                            .iter()
                            .filter_map(|p| corpus.doc_of(p)),
                    )
                    .collect();
                !any_gold_passage
                    && top
                        .iter()
                        .filter_map(|p| corpus.doc_of(p))
                        .any(|d| gold_docs.contains(d))
            }
        };
        if member {
            partition.in_slice.push(query.query_id.clone());
        } else {
            partition.out_slice.push(query.query_id.clone());
        }
    }
    Ok(partition)
}
