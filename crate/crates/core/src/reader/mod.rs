//! Prompt construction, context budgeting and the retrieval-depth sweep.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

mod backend;
mod context;
mod masking;
mod prompt;
mod sweep;

pub use backend::{
    connect, BackendError, BackendSpec, GenerationRequest, HttpBackend, MockBackend, MockBehavior,
    ReaderBackend, RetryPolicy,
};
pub use context::{
    count_tokens, select_context, truncate_context, ContextPassage, TruncatedContext,
};
pub use masking::{truncation_masking_check, MaskingReport};
pub use prompt::{assemble_prompt, RELEVANT_INSTRUCTION, STANDARD_INSTRUCTION};
pub use sweep::{run_sweep, AnswerKey, AnswerStore, SweepOutcome, SweepPlan};

use crate::metrics::MetricsError;

#[derive(Debug, thiserror::Error)]
pub enum ReaderError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: malformed answer: {message}")]
    MalformedAnswer {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("passage {0:?} is not in the corpus")]
    UnknownPassage(String),
    #[error("query {query_id:?}: no gold passage within the top {k}")]
    ConditionUnsatisfied { query_id: String, k: u32 },
    #[error("query {0:?} has no gold passages")]
    MissingGold(String),
    #[error("invalid k grid: {0}")]
    InvalidGrid(String),
    #[error("answer sets cover different queries: {0}")]
    QueryMismatch(String),
    #[error("reader configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    Standard,
    Relevant,
}

impl PromptVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Standard => "standard",
            PromptVariant::Relevant => "relevant",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionTag {
    TopK,
    TopGold,
    NoContext,
}

impl ConditionTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionTag::TopK => "top_k",
            ConditionTag::TopGold => "top_gold",
            ConditionTag::NoContext => "no_context",
        }
    }
}

impl fmt::Display for ConditionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which passages the reader sees. `k` is ignored for `NoContext`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ContextCondition {
    pub tag: ConditionTag,
    pub k: u32,
}

impl ContextCondition {
    pub fn top_k(k: u32) -> Self {
        Self {
            tag: ConditionTag::TopK,
            k,
        }
    }

    pub fn top_gold(k: u32) -> Self {
        Self {
            tag: ConditionTag::TopGold,
            k,
        }
    }

    pub fn no_context() -> Self {
        Self {
            tag: ConditionTag::NoContext,
            k: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Decoding {
    pub greedy: bool,
    pub beam_size: u32,
    pub temperature: f64,
}

impl Default for Decoding {
    fn default() -> Self {
        Self {
            greedy: true,
            beam_size: 1,
            temperature: 1.0,
        }
    }
}

/// Context budgets commonly used per reader family, in harness tokens.
pub const FLAN_CONTEXT_BUDGET: usize = 2000;
pub const LLAMA2_CONTEXT_BUDGET: usize = 4000;
pub const LLAMA3_CONTEXT_BUDGET: usize = 8000;
pub const DEFAULT_MAX_ANSWER_TOKENS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderConfig {
    pub reader_name: String,
    #[serde(default = "default_budget")]
    pub context_token_budget: usize,
    #[serde(default = "default_answer_tokens")]
    pub max_answer_tokens: usize,
    #[serde(default = "default_variant")]
    pub prompt_variant: PromptVariant,
    #[serde(default)]
    pub decoding: Decoding,
    /// Concurrent backend calls.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    pub backend: BackendSpec,
}

fn default_budget() -> usize {
    FLAN_CONTEXT_BUDGET
}
fn default_answer_tokens() -> usize {
    DEFAULT_MAX_ANSWER_TOKENS
}
fn default_variant() -> PromptVariant {
    PromptVariant::Standard
}
fn default_parallelism() -> usize {
    4
}

impl ReaderConfig {
    pub fn new(reader_name: impl Into<String>, backend: BackendSpec) -> Self {
        Self {
            reader_name: reader_name.into(),
            context_token_budget: FLAN_CONTEXT_BUDGET,
            max_answer_tokens: DEFAULT_MAX_ANSWER_TOKENS,
            prompt_variant: PromptVariant::Standard,
            decoding: Decoding::default(),
            parallelism: default_parallelism(),
            retry: RetryPolicy::default(),
            backend,
        }
    }

    pub fn validate(&self) -> Result<(), ReaderError> {
        if self.reader_name.trim().is_empty() {
            return Err(ReaderError::Config("reader_name is empty".into()));
        }
        if self.context_token_budget == 0 {
            return Err(ReaderError::Config(format!(
                "{}: context_token_budget must be > 0",
                self.reader_name
            )));
        }
        if self.max_answer_tokens == 0 {
            return Err(ReaderError::Config(format!(
                "{}: max_answer_tokens must be > 0",
                self.reader_name
            )));
        }
        if self.retry.max_attempts == 0 {
            return Err(ReaderError::Config(format!(
                "{}: retry.max_attempts must be >= 1",
                self.reader_name
            )));
        }
        Ok(())
    }
}

/// One generation, as persisted in `answers.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderAnswer {
    pub query_id: String,
    pub retriever: String,
    pub reader: String,
    pub condition: ConditionTag,
    /// 0 for the no-context condition.
    pub k: u32,
    pub variant: PromptVariant,
    pub answer: String,
    pub truncated: bool,
    pub context_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReaderAnswer {
    pub fn key(&self) -> AnswerKey {
        AnswerKey {
            query_id: self.query_id.clone(),
            k: self.k,
            condition: self.condition,
            retriever: self.retriever.clone(),
            reader: self.reader.clone(),
            variant: self.variant,
        }
    }
}
