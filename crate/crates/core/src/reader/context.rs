use serde::{Deserialize, Serialize};

use super::{ConditionTag, ContextCondition, ReaderError};
use crate::dataset::{Corpus, Query};
use crate::retrieval::RetrievalRun;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPassage {
    pub passage_id: String,
    pub title: String,
    pub text: String,
}

impl ContextPassage {
    fn tokens(&self) -> usize {
        count_tokens(&self.title) + count_tokens(&self.text)
    }
}

/// Harness token count: whitespace-separated pieces.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncatedContext {
    pub passages: Vec<ContextPassage>,
    pub truncated: bool,
    /// Tokens kept, never above the budget.
    pub token_count: usize,
}

/// Keeps passages in rank order until `budget` tokens are used. A passage
/// that straddles the budget is cut mid-way (title tokens first, then text)
/// and re-joined with single spaces; passages after it are dropped.
pub fn truncate_context(passages: Vec<ContextPassage>, budget: usize) -> TruncatedContext {
    let total: usize = passages.iter().map(ContextPassage::tokens).sum();
    if total <= budget {
        return TruncatedContext {
            passages,
            truncated: false,
            token_count: total,
        };
    }
    let mut kept = Vec::new();
    let mut used = 0usize;
    for passage in passages {
        let remaining = budget - used;
        if remaining == 0 {
            break;
        }
        let n = passage.tokens();
        if n <= remaining {
            used += n;
            kept.push(passage);
            continue;
        }
        let title: Vec<&str> = passage.title.split_whitespace().collect();
        let text: Vec<&str> = passage.text.split_whitespace().collect();
        let title_keep = title.len().min(remaining);
        let text_keep = remaining - title_keep;
        kept.push(ContextPassage {
            passage_id: passage.passage_id,
            title: title[..title_keep].join(" "),
            text: text[..text_keep].join(" "),
        });
        used += remaining;
        break;
    }
    TruncatedContext {
        passages: kept,
        truncated: true,
        token_count: used,
    }
}

/// Passages shown to the reader under `condition`, in rank order.
///
/// `TopK` takes the first k run entries (fewer when the run is shorter or
/// lacks the query). `TopGold` keeps only the gold passages among them and
/// fails when there are none, since such queries belong to the no-gold slice.
pub fn select_context(
    query: &Query,
    run: &RetrievalRun,
    corpus: &Corpus,
    condition: ContextCondition,
) -> Result<Vec<ContextPassage>, ReaderError> {
    let entries = match condition.tag {
        ConditionTag::NoContext => return Ok(Vec::new()),
        ConditionTag::TopK => run.top_k(&query.query_id, condition.k as usize).to_vec(),
        ConditionTag::TopGold => {
            if query.gold_passage_ids.is_empty() {
                return Err(ReaderError::MissingGold(query.query_id.clone()));
            }
            let gold: Vec<_> = run
                .top_k(&query.query_id, condition.k as usize)
                .iter()
                .filter(|e| query.is_gold_passage(&e.passage_id))
                .cloned()
                .collect();
            if gold.is_empty() {
                return Err(ReaderError::ConditionUnsatisfied {
                    query_id: query.query_id.clone(),
                    k: condition.k,
                });
            }
            gold
        }
    };
    entries
        .iter()
        .map(|e| {
            let passage = corpus
                .get(&e.passage_id)
                .ok_or_else(|| ReaderError::UnknownPassage(e.passage_id.clone()))?;
            Ok(ContextPassage {
                passage_id: passage.passage_id.clone(),
                title: passage.title.clone(),
                text: passage.text.clone(),
            })
        })
        .collect()
}
