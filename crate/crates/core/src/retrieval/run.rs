//! Ranked result lists and the TREC run format
//! (`query_id Q0 passage_id rank score tag`).

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RetrievalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub passage_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: u32,
}

/// Per-query ranked passage lists produced by one retriever.
///
/// Within each query, ranks are `1..=n`, scores never increase with rank and
/// no passage id repeats. Every constructor enforces this.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalRun {
    retriever_name: String,
    rankings: BTreeMap<String, Vec<RunEntry>>,
}

impl RetrievalRun {
    /// Builds a run from already-ordered `(passage_id, score)` lists; ranks
    /// are assigned from list position.
    pub fn from_ranked_lists(
        retriever_name: impl Into<String>,
        lists: impl IntoIterator<Item = (String, Vec<(String, f64)>)>,
    ) -> Result<Self, RetrievalError> {
        let mut rankings = BTreeMap::new();
        for (query_id, list) in lists {
            let entries: Vec<RunEntry> = list
                .into_iter()
                .enumerate()
                .map(|(i, (passage_id, score))| RunEntry {
                    passage_id,
                    score,
                    rank: i as u32 + 1,
                })
                .collect();
            validate_ranking(&query_id, &entries)?;
            if rankings.insert(query_id.clone(), entries).is_some() {
                return Err(RetrievalError::InvalidRun(format!(
                    "query {query_id:?} listed twice"
                )));
            }
        }
        Ok(Self {
            retriever_name: retriever_name.into(),
            rankings,
        })
    }

    pub fn retriever_name(&self) -> &str {
        &self.retriever_name
    }

    /// Length of the longest per-query list.
    pub fn max_k(&self) -> usize {
        self.rankings.values().map(Vec::len).max().unwrap_or(0)
    }

    /// The full ranking for a query; empty when the query is absent.
    pub fn ranking(&self, query_id: &str) -> &[RunEntry] {
        self.rankings.get(query_id).map_or(&[], Vec::as_slice)
    }

    pub fn top_k(&self, query_id: &str, k: usize) -> &[RunEntry] {
        let ranking = self.ranking(query_id);
        &ranking[..k.min(ranking.len())]
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.rankings.contains_key(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[RunEntry])> {
        self.rankings
            .iter()
            .map(|(q, e)| (q.as_str(), e.as_slice()))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.retriever_name = name.into();
        self
    }

    pub(crate) fn from_validated(
        retriever_name: String,
        rankings: BTreeMap<String, Vec<RunEntry>>,
    ) -> Self {
        Self {
            retriever_name,
            rankings,
        }
    }

    /// Parses a TREC run. The tag column is ignored in favour of
    /// `retriever_name`.
    pub fn from_trec<R: BufRead>(
        reader: R,
        retriever_name: impl Into<String>,
    ) -> Result<Self, RetrievalError> {
        // (line, entry) per query, in file order
        let mut raw: BTreeMap<String, Vec<(usize, RunEntry)>> = BTreeMap::new();
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| malformed(lineno, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(malformed(
                    lineno,
                    format!("expected 6 fields, found {}", fields.len()),
                ));
            }
            let rank: u32 = fields[3].parse().map_err(|_| {
                malformed(lineno, format!("rank {:?} is not an integer", fields[3]))
            })?;
            if rank == 0 {
                return Err(malformed(lineno, "rank must be >= 1".into()));
            }
            let score: f64 = fields[4]
                .parse()
                .map_err(|_| malformed(lineno, format!("score {:?} is not a number", fields[4])))?;
            if !score.is_finite() {
                return Err(malformed(lineno, format!("score {score} is not finite")));
            }
            let query_id = fields[0].to_owned();
            let passage_id = fields[2].to_owned();
            if !seen.insert((query_id.clone(), passage_id.clone())) {
                return Err(RetrievalError::DuplicateEntry {
                    line: lineno,
                    query_id,
                    passage_id,
                });
            }
            raw.entry(query_id).or_default().push((
                lineno,
                RunEntry {
                    passage_id,
                    score,
                    rank,
                },
            ));
        }
        if raw.is_empty() {
            return Err(RetrievalError::InvalidRun("run file has no entries".into()));
        }
        let mut rankings = BTreeMap::new();
        for (query_id, mut entries) in raw {
            entries.sort_by_key(|(_, e)| e.rank);
            for (pos, (line, entry)) in entries.iter().enumerate() {
                let expected = pos as u32 + 1;
                if entry.rank != expected {
                    return Err(RetrievalError::NonContiguousRanks {
                        line: *line,
                        query_id,
                        expected,
                        found: entry.rank,
                    });
                }
                if pos > 0 && entry.score > entries[pos - 1].1.score {
                    return Err(RetrievalError::ScoreNotMonotone {
                        line: *line,
                        query_id,
                    });
                }
            }
            rankings.insert(query_id, entries.into_iter().map(|(_, e)| e).collect());
        }
        Ok(Self {
            retriever_name: retriever_name.into(),
            rankings,
        })
    }

    pub fn import(path: &Path, retriever_name: impl Into<String>) -> Result<Self, RetrievalError> {
        let file = File::open(path).map_err(|source| RetrievalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_trec(BufReader::new(file), retriever_name)
    }

    /// Writes the run in TREC format, queries in id order. Scores use the
    /// shortest decimal that parses back to the same f64. Whitespace in the retriever name becomes `_` so the tag stays
    /// one field.
    pub fn write_trec<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let tag: String = self
            .retriever_name
            .chars()
            .map(|c| if c.is_whitespace() { '_' } else { c })
            .collect();
        let tag = if tag.is_empty() {
            "run".to_owned()
        } else {
            tag
        };
        for (query_id, entries) in &self.rankings {
            for entry in entries {
                writeln!(
                    out,
                    "{query_id} Q0 {} {} {} {tag}",
                    entry.passage_id, entry.rank, entry.score
                )?;
            }
        }
        out.flush()
    }

    pub fn export(&self, path: &Path) -> Result<(), RetrievalError> {
        let io_err = |source| RetrievalError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_trec(BufWriter::new(file)).map_err(io_err)
    }
}

fn malformed(line: usize, message: String) -> RetrievalError {
    RetrievalError::MalformedLine { line, message }
}

fn validate_ranking(query_id: &str, entries: &[RunEntry]) -> Result<(), RetrievalError> {
    let mut ids = HashSet::new();
    for (pos, entry) in entries.iter().enumerate() {
        if entry.rank != pos as u32 + 1 {
            return Err(RetrievalError::InvalidRun(format!(
                "query {query_id:?}: rank {} at position {}",
                entry.rank,
                pos + 1
            )));
        }
        if !entry.score.is_finite() {
            return Err(RetrievalError::InvalidRun(format!(
                "query {query_id:?}: non-finite score at rank {}",
                entry.rank
            )));
        }
        if pos > 0 && entry.score > entries[pos - 1].score {
            return Err(RetrievalError::InvalidRun(format!(
                "query {query_id:?}: score increases at rank {}",
                entry.rank
            )));
        }
        if !ids.insert(entry.passage_id.as_str()) {
            return Err(RetrievalError::InvalidRun(format!(
                "query {query_id:?}: passage {:?} appears twice",
                entry.passage_id
            )));
        }
    }
    Ok(())
}
