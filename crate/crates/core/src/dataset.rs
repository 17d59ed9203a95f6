//! Corpus and query-set ingestion.
//!
//! Both files are JSON Lines. Blank lines are skipped; every other line must
//! parse as one record. Line numbers in errors are 1-based.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate passage_id {id:?} on lines {first_line} and {second_line}")]
    DuplicatePassage {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("duplicate query_id {id:?} on lines {first_line} and {second_line}")]
    DuplicateQuery {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("line {line}: passage {id:?}: {reason}")]
    InvalidPassage {
        line: usize,
        id: String,
        reason: String,
    },
    #[error("line {line}: query {id:?}: {reason}")]
    InvalidQuery {
        line: usize,
        id: String,
        reason: String,
    },
    #[error("no records found")]
    Empty,
}

/// One retrieval unit (a paragraph, a title, an abstract).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub doc_id: String,
    pub title: String,
    pub text: String,
}

impl Passage {
    fn validate(&self) -> Result<(), String> {
        if self.passage_id.is_empty() {
            return Err("passage_id is empty".into());
        }
        if self.doc_id.is_empty() {
            return Err("doc_id is empty".into());
        }
        if self.text.trim().is_empty() {
            return Err("text is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub gold_passage_ids: Vec<String>,
    #[serde(default)]
    pub gold_doc_ids: Vec<String>,
    #[serde(default)]
    pub multihop: bool,
}

impl Query {
    fn validate(&self) -> Result<(), String> {
        if self.query_id.is_empty() {
            return Err("query_id is empty".into());
        }
        if self.gold_answers.is_empty() {
            return Err("gold_answers must be non-empty".into());
        }
        if self.multihop && self.gold_passage_ids.len() < 2 {
            return Err("multihop requires at least two gold_passage_ids".into());
        }
        Ok(())
    }

    pub fn is_gold_passage(&self, passage_id: &str) -> bool {
        self.gold_passage_ids.iter().any(|g| g == passage_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub passage_count: usize,
    pub doc_count: usize,
    pub avg_passages_per_doc: f64,
}

impl CorpusStats {
    pub fn from_counts(passage_count: usize, doc_count: usize) -> Self {
        let avg_passages_per_doc = if doc_count == 0 {
            0.0
        } else {
            passage_count as f64 / doc_count as f64
        };
        Self {
            passage_count,
            doc_count,
            avg_passages_per_doc,
        }
    }
}

/// An immutable, id-indexed passage collection.
#[derive(Debug, Clone)]
pub struct Corpus {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus from in-memory passages, applying the same checks as
    /// file ingestion. Line numbers in errors are the 1-based positions.
    pub fn from_passages(passages: Vec<Passage>) -> Result<Self, DatasetError> {
        if passages.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut by_id = HashMap::with_capacity(passages.len());
        for (idx, passage) in passages.iter().enumerate() {
            passage
                .validate()
                .map_err(|reason| DatasetError::InvalidPassage {
                    line: idx + 1,
                    id: passage.passage_id.clone(),
                    reason,
                })?;
            if let Some(first) = by_id.insert(passage.passage_id.clone(), idx) {
                return Err(DatasetError::DuplicatePassage {
                    id: passage.passage_id.clone(),
                    first_line: first + 1,
                    second_line: idx + 1,
                });
            }
        }
        Ok(Self { passages, by_id })
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, DatasetError> {
        let mut passages = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| DatasetError::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let passage: Passage =
                serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
                    line: lineno,
                    message: e.to_string(),
                })?;
            passage
                .validate()
                .map_err(|reason| DatasetError::InvalidPassage {
                    line: lineno,
                    id: passage.passage_id.clone(),
                    reason,
                })?;
            if let Some(&first_line) = seen.get(&passage.passage_id) {
                return Err(DatasetError::DuplicatePassage {
                    id: passage.passage_id,
                    first_line,
                    second_line: lineno,
                });
            }
            seen.insert(passage.passage_id.clone(), lineno);
            passages.push(passage);
        }
        if passages.is_empty() {
            return Err(DatasetError::Empty);
        }
        let by_id = passages
            .iter()
            .enumerate()
            .map(|(i, p)| (p.passage_id.clone(), i))
            .collect();
        Ok(Self { passages, by_id })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let file = File::open(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(BufReader::new(file))
    }

    /// Writes the corpus as JSON Lines in ingestion order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for passage in &self.passages {
            serde_json::to_writer(&mut out, passage)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn export(&self, path: &Path) -> Result<(), DatasetError> {
        let io_err = |source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_jsonl(BufWriter::new(file)).map_err(io_err)
    }

    pub fn get(&self, passage_id: &str) -> Option<&Passage> {
        self.by_id.get(passage_id).map(|&i| &self.passages[i])
    }

    pub fn contains(&self, passage_id: &str) -> bool {
        self.by_id.contains_key(passage_id)
    }

    pub fn doc_of(&self, passage_id: &str) -> Option<&str> {
        self.get(passage_id).map(|p| p.doc_id.as_str())
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        let docs: BTreeSet<&str> = self.passages.iter().map(|p| p.doc_id.as_str()).collect();
        CorpusStats::from_counts(self.passages.len(), docs.len())
    }
}

/// Validated queries plus non-fatal ingestion warnings.
#[derive(Debug, Clone, Default)]
pub struct QuerySet {
    queries: Vec<Query>,
    by_id: HashMap<String, usize>,
    line_of: HashMap<String, usize>,
    warnings: Vec<String>,
}

impl QuerySet {
    pub fn from_queries(queries: Vec<Query>) -> Result<Self, DatasetError> {
        let mut set = QuerySet::default();
        for (idx, query) in queries.into_iter().enumerate() {
            set.push(query, idx + 1)?;
        }
        Ok(set)
    }

    /// Parses query JSON Lines. When a corpus is supplied, gold passage ids
    /// missing from it are reported as warnings, and gold_doc_ids (when
    /// present) must cover the documents of the known gold passages.
    pub fn from_reader<R: BufRead>(
        reader: R,
        corpus: Option<&Corpus>,
    ) -> Result<Self, DatasetError> {
        let mut set = QuerySet::default();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| DatasetError::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let query: Query =
                serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
                    line: lineno,
                    message: e.to_string(),
                })?;
            if let Some(corpus) = corpus {
                set.check_against_corpus(&query, corpus, lineno)?;
            }
            set.push(query, lineno)?;
        }
        if set.queries.is_empty() {
            return Err(DatasetError::Empty);
        }
        Ok(set)
    }

    pub fn load(path: &Path, corpus: Option<&Corpus>) -> Result<Self, DatasetError> {
        let file = File::open(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(BufReader::new(file), corpus)
    }

    fn check_against_corpus(
        &mut self,
        query: &Query,
        corpus: &Corpus,
        lineno: usize,
    ) -> Result<(), DatasetError> {
        for pid in &query.gold_passage_ids {
            match corpus.doc_of(pid) {
                None => self.warnings.push(format!(
                    "line {lineno}: query {:?}: gold passage {pid:?} not in corpus",
                    query.query_id
                )),
                Some(doc) => {
                    if !query.gold_doc_ids.is_empty()
                        && !query.gold_doc_ids.iter().any(|d| d == doc)
                    {
                        return Err(DatasetError::InvalidQuery {
                            line: lineno,
                            id: query.query_id.clone(),
                            reason: format!(
                                "gold_doc_ids does not contain {doc:?}, the document of gold passage {pid:?}"
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn push(&mut self, query: Query, lineno: usize) -> Result<(), DatasetError> {
        query
            .validate()
            .map_err(|reason| DatasetError::InvalidQuery {
                line: lineno,
                id: query.query_id.clone(),
                reason,
            })?;
        if let Some(&first) = self.line_of.get(&query.query_id) {
            return Err(DatasetError::DuplicateQuery {
                id: query.query_id,
                first_line: first,
                second_line: lineno,
            });
        }
        self.line_of.insert(query.query_id.clone(), lineno);
        self.by_id
            .insert(query.query_id.clone(), self.queries.len());
        self.queries.push(query);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&Query> {
        self.by_id.get(query_id).map(|&i| &self.queries[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Query> {
        self.queries.iter()
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

impl<'a> IntoIterator for &'a QuerySet {
    type Item = &'a Query;
    type IntoIter = std::slice::Iter<'a, Query>;

    fn into_iter(self) -> Self::IntoIter {
        self.queries.iter()
    }
}
