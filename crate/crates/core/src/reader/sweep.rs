//! Resumable retrieval-depth sweeps persisted to `answers.jsonl`.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use futures::stream::{self, StreamExt};

use super::backend::{GenerationRequest, ReaderBackend};
use super::context::{select_context, truncate_context};
use super::prompt::assemble_prompt;
use super::{
    ConditionTag, ContextCondition, PromptVariant, ReaderAnswer, ReaderConfig, ReaderError,
};
use crate::dataset::{Corpus, QuerySet};
use crate::retrieval::RetrievalRun;

/// Identity of an answer; also its sort key in the answers file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnswerKey {
    pub query_id: String,
    pub k: u32,
    pub condition: ConditionTag,
    pub retriever: String,
    pub reader: String,
    pub variant: PromptVariant,
}

/// Append-only answer log with an in-memory index.
///
/// Answers are appended as they complete; `compact` rewrites the file in key
/// order. A torn final line (from an interrupted write) is dropped on open.
/// When a key appears twice the later line wins.
#[derive(Debug)]
pub struct AnswerStore {
    path: PathBuf,
    answers: BTreeMap<AnswerKey, ReaderAnswer>,
    writer: Option<BufWriter<File>>,
}

impl AnswerStore {
    pub fn open(path: &Path) -> Result<Self, ReaderError> {
        let answers = if path.exists() {
            read_answers(path)?
                .into_iter()
                .map(|answer| (answer.key(), answer))
                .collect()
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            path: path.to_path_buf(),
            answers,
            writer: None,
        })
    }

    /// Reads every answer in a file without opening it for writing.
    pub fn load(path: &Path) -> Result<Vec<ReaderAnswer>, ReaderError> {
        Ok(Self::open(path)?.answers.into_values().collect())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &AnswerKey) -> bool {
        self.answers.contains_key(key)
    }

    /// True when the key has an answer that did not fail.
    pub fn is_complete(&self, key: &AnswerKey) -> bool {
        self.answers.get(key).is_some_and(|a| a.error.is_none())
    }

    pub fn get(&self, key: &AnswerKey) -> Option<&ReaderAnswer> {
        self.answers.get(key)
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn answers(&self) -> impl Iterator<Item = &ReaderAnswer> {
        self.answers.values()
    }

    fn io_err(&self, source: std::io::Error) -> ReaderError {
        ReaderError::Io {
            path: self.path.clone(),
            source,
        }
    }

    pub fn append(&mut self, answer: ReaderAnswer) -> Result<(), ReaderError> {
        if self.writer.is_none() {
            if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| self.io_err(e))?;
            }
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| self.io_err(e))?;
            self.writer = Some(BufWriter::new(file));
        }
        let line = serde_json::to_string(&answer).expect("answers serialize");
        let writer = self.writer.as_mut().expect("writer opened above");
        let res = writeln!(writer, "{line}").and_then(|_| writer.flush());
        res.map_err(|e| self.io_err(e))?;
        self.answers.insert(answer.key(), answer);
        Ok(())
    }

    /// Rewrites the file sorted by key, through a temporary file and rename.
    pub fn compact(&mut self) -> Result<(), ReaderError> {
        self.writer = None;
        let tmp = self.path.with_extension("jsonl.tmp");
        let write = || -> std::io::Result<()> {
            let mut out = BufWriter::new(File::create(&tmp)?);
            for answer in self.answers.values() {
                serde_json::to_writer(&mut out, answer)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
            fs::rename(&tmp, &self.path)
        };
        write().map_err(|e| self.io_err(e))
    }
}

fn read_answers(path: &Path) -> Result<Vec<ReaderAnswer>, ReaderError> {
    let io_err = |source| ReaderError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut answers = Vec::with_capacity(lines.len());
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ReaderAnswer>(line) {
            Ok(answer) => answers.push(answer),
            Err(e) if Some(idx) == last => {
                tracing::warn!(path = %path.display(), line = idx + 1, error = %e,
                    "dropping torn final answer line");
            }
            Err(e) => {
                return Err(ReaderError::MalformedAnswer {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(answers)
}

/// Everything a sweep iterates over.
#[derive(Debug, Clone, Copy)]
pub struct SweepPlan<'a> {
    pub queries: &'a QuerySet,
    pub corpus: &'a Corpus,
    pub run: &'a RetrievalRun,
    pub config: &'a ReaderConfig,
    pub k_grid: &'a [u32],
    pub conditions: &'a [ConditionTag],
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// Every answer the plan covers, new and reused, in key order.
    pub answers: Vec<ReaderAnswer>,
    pub backend_calls: usize,
    pub reused: usize,
    pub failures: usize,
    /// Top-gold cells skipped because no gold passage was within depth.
    pub unsatisfied: usize,
}

struct Job {
    key: AnswerKey,
    request: GenerationRequest,
    truncated: bool,
    context_tokens: usize,
}

fn validate_grid(grid: &[u32]) -> Result<(), ReaderError> {
    if grid.is_empty() {
        return Err(ReaderError::InvalidGrid("empty".into()));
    }
    if grid[0] == 0 {
        return Err(ReaderError::InvalidGrid("depths must be >= 1".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ReaderError::InvalidGrid(format!(
            "{grid:?} is not strictly increasing"
        )));
    }
    Ok(())
}

/// Runs one reader over every (query, condition, depth) cell of the plan,
/// skipping cells already answered in `store`. Backend failures are recorded on the
/// answer after the retry policy gives up; the sweep keeps going.
pub async fn run_sweep(
    plan: SweepPlan<'_>,
    backend: &dyn ReaderBackend,
    store: &mut AnswerStore,
) -> Result<SweepOutcome, ReaderError> {
    validate_grid(plan.k_grid)?;
    plan.config.validate()?;
    let config = plan.config;
    let retriever = plan.run.retriever_name().to_owned();

    let mut outcome = SweepOutcome::default();
    let mut keys = Vec::new();
    let mut jobs = Vec::new();
    for query in plan.queries {
        for &tag in plan.conditions {
            let cells: Vec<ContextCondition> = match tag {
                ConditionTag::NoContext => vec![ContextCondition::no_context()],
                ConditionTag::TopK => plan
                    .k_grid
                    .iter()
                    .map(|&k| ContextCondition::top_k(k))
                    .collect(),
                ConditionTag::TopGold => plan
                    .k_grid
                    .iter()
                    .map(|&k| ContextCondition::top_gold(k))
                    .collect(),
            };
            for condition in cells {
                let key = AnswerKey {
                    query_id: query.query_id.clone(),
                    k: condition.k,
                    condition: condition.tag,
                    retriever: retriever.clone(),
                    reader: config.reader_name.clone(),
                    variant: config.prompt_variant,
                };
                if store.is_complete(&key) {
                    outcome.reused += 1;
                    keys.push(key);
                    continue;
                }
                let passages = match select_context(query, plan.run, plan.corpus, condition) {
                    Ok(p) => p,
                    Err(ReaderError::ConditionUnsatisfied { .. } | ReaderError::MissingGold(_)) => {
                        outcome.unsatisfied += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let context = truncate_context(passages, config.context_token_budget);
                let prompt = assemble_prompt(query, &context.passages, config.prompt_variant);
                keys.push(key.clone());
                jobs.push(Job {
                    key,
                    request: GenerationRequest {
                        prompt,
                        max_tokens: config.max_answer_tokens,
                        decoding: config.decoding,
                        query_id: query.query_id.clone(),
                        context_passage_ids: context
                            .passages
                            .iter()
                            .map(|p| p.passage_id.clone())
                            .collect(),
                    },
                    truncated: context.truncated,
                    context_tokens: context.token_count,
                });
            }
        }
    }

    outcome.backend_calls = jobs.len();
    let retry = config.retry;
    let mut results = stream::iter(jobs)
        .map(|job| async move {
            let result = retry.call(backend, &job.request).await;
            (job, result)
        })
        .buffer_unordered(config.parallelism.max(1));
    while let Some((job, result)) = results.next().await {
        let (answer, error) = match result {
            Ok(text) => (first_line(&text), None),
            Err(message) => {
                outcome.failures += 1;
                tracing::warn!(query = %job.key.query_id, k = job.key.k, %message, "backend failed");
                (String::new(), Some(message))
            }
        };
        store.append(ReaderAnswer {
            query_id: job.key.query_id,
            retriever: job.key.retriever,
            reader: job.key.reader,
            condition: job.key.condition,
            k: job.key.k,
            variant: job.key.variant,
            answer,
            truncated: job.truncated,
            context_tokens: job.context_tokens,
            error,
        })?;
    }
    drop(results);
    store.compact()?;

    keys.sort();
    outcome.answers = keys.iter().filter_map(|k| store.get(k).cloned()).collect();
    Ok(outcome)
}

fn first_line(text: &str) -> String {
    text.trim_start()
        .lines()
        .next()
        .unwrap_or("")
        .trim()
        .to_owned()
}
