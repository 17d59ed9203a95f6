//! Lexical retrieval, imported runs and reranking.

use std::path::PathBuf;

mod bm25;
mod rerank;
mod run;
mod tokenize;

pub use bm25::{bm25_idf, bm25_tf_weight, Bm25Params, InvertedIndex, Posting, ScoredPassage};
pub use rerank::{rerank, Candidate, HttpScorer, MockScorer, RelevanceScorer, ScoreRequest};
pub use run::{RetrievalRun, RunEntry};
pub use tokenize::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
    #[error("query {0:?} has no terms after tokenization")]
    EmptyQuery(String),
    #[error("invalid depth {0}")]
    InvalidDepth(usize),
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: query {query_id:?} expected rank {expected}, found {found}")]
    NonContiguousRanks {
        line: usize,
        query_id: String,
        expected: u32,
        found: u32,
    },
    #[error("line {line}: query {query_id:?} score increases with rank")]
    ScoreNotMonotone { line: usize, query_id: String },
    #[error("line {line}: duplicate entry ({query_id:?}, {passage_id:?})")]
    DuplicateEntry {
        line: usize,
        query_id: String,
        passage_id: String,
    },
    #[error("invalid run: {0}")]
    InvalidRun(String),
    #[error("query {0:?} is not in the query set")]
    UnknownQuery(String),
    #[error("passage {0:?} is not in the corpus")]
    UnknownPassage(String),
    #[error("scorer failed for query {query_id:?}: {message}")]
    Scorer { query_id: String, message: String },
}
