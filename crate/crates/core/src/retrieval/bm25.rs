//! Okapi BM25 over an in-memory inverted index.
//!
//! score(q, d) = sum over distinct query terms t present in d of
//!   idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl))
//! with idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1), which is always positive.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::RetrievalError;
use crate::dataset::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(RetrievalError::InvalidParams(format!(
                "k1 must be > 0, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(RetrievalError::InvalidParams(format!(
                "b must be in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Position of the passage in `InvertedIndex::passage_ids`.
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    params: Bm25Params,
    passage_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPassage {
    pub passage_id: String,
    pub score: f64,
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Self, RetrievalError> {
        params.validate()?;
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut passage_ids = Vec::with_capacity(corpus.len());
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (doc, passage) in corpus.passages().iter().enumerate() {
            let tokens = tokenize(&passage.text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for token in &tokens {
                *tf.entry(token.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting {
                    doc: doc as u32,
                    tf: count,
                });
            }
            passage_ids.push(passage.passage_id.clone());
            doc_lengths.push(tokens.len() as u32);
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        Ok(Self {
            params,
            passage_ids,
            doc_lengths,
            avg_doc_length,
            postings,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn passage_count(&self) -> usize {
        self.passage_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    /// Token count of a passage, or `None` for ids outside the index.
    pub fn doc_length(&self, passage_id: &str) -> Option<u32> {
        self.passage_ids
            .iter()
            .position(|p| p == passage_id)
            .map(|i| self.doc_lengths[i])
    }

    /// `(passage_id, term_frequency)` pairs for a term, in corpus order.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|list| {
                list.iter()
                    .map(|p| (self.passage_ids[p.doc as usize].as_str(), p.tf))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, Vec::len);
        bm25_idf(self.passage_ids.len(), df)
    }

    /// Top-`k` passages by BM25 score. Ties go to the lexicographically
    /// smaller passage id. Only passages sharing at least one term with the
    /// query are returned.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredPassage>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidDepth(k));
        }
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        if terms.is_empty() {
            return Err(RetrievalError::EmptyQuery(query.to_owned()));
        }
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = bm25_idf(self.passage_ids.len(), list.len());
            for posting in list {
                let dl = self.doc_lengths[posting.doc as usize];
                *scores.entry(posting.doc).or_insert(0.0) +=
                    idf * bm25_tf_weight(posting.tf, dl, self.avg_doc_length, self.params);
            }
        }
        let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.passage_ids[a.0 as usize].cmp(&self.passage_ids[b.0 as usize]))
        });
        ranked.truncate(k);
        Ok(ranked
            .into_iter()
            .map(|(doc, score)| ScoredPassage {
                passage_id: self.passage_ids[doc as usize].clone(),
                score,
            })
            .collect())
    }
}

pub fn bm25_idf(n: usize, df: usize) -> f64 {
    let n = n as f64;
    let df = df as f64;
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

pub fn bm25_tf_weight(tf: u32, doc_len: u32, avg_doc_len: f64, params: Bm25Params) -> f64 {
    let tf = f64::from(tf);
    let norm = 1.0 - params.b + params.b * f64::from(doc_len) / avg_doc_len;
    tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Passage;

    fn passage(id: &str, doc: &str, text: &str) -> Passage {
        Passage {
            passage_id: id.into(),
            doc_id: doc.into(),
            title: String::new(),
            text: text.into(),
        }
    }

    fn two_passage() -> InvertedIndex {
        let corpus = Corpus::from_passages(vec![
            passage("p1", "d1", "blue whale"),
            passage("p2", "d2", "red fox"),
        ])
        .unwrap();
        InvertedIndex::build(&corpus, Bm25Params::default()).unwrap()
    }

    #[test]
    fn postings_and_lengths() {
        let index = two_passage();
        assert_eq!(index.postings("whale"), vec![("p1", 1)]);
        assert_eq!(index.doc_length("p1"), Some(2));
        assert_eq!(index.doc_length("p2"), Some(2));
        assert_eq!(index.avg_doc_length(), 2.0);
        assert_eq!(index.passage_count(), 2);
    }

    #[test]
    fn sole_term_match_ranks_first() {
        let hits = two_passage().search("whale", 10).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].passage_id, "p1");
    }

    #[test]
    fn unknown_term_is_empty_not_error() {
        assert!(two_passage().search("zzz", 5).unwrap().is_empty());
    }

    #[test]
    fn empty_query_is_error() {
        assert!(matches!(
            two_passage().search("?!", 5),
            Err(RetrievalError::EmptyQuery(_))
        ));
    }

    #[test]
    fn ties_break_on_passage_id() {
        let corpus = Corpus::from_passages(vec![
            passage("b", "d", "same words"),
            passage("a", "d", "same words"),
        ])
        .unwrap();
        let index = InvertedIndex::build(&corpus, Bm25Params::default()).unwrap();
        let hits = index.search("same", 2).unwrap();
        assert_eq!(hits[0].passage_id, "a");
        assert_eq!(hits[1].passage_id, "b");
        assert_eq!(hits[0].score, hits[1].score);
    }

    #[test]
    fn rejects_bad_params() {
        let corpus = Corpus::from_passages(vec![passage("p", "d", "x")]).unwrap();
        assert!(InvertedIndex::build(&corpus, Bm25Params { k1: 0.0, b: 0.4 }).is_err());
        assert!(InvertedIndex::build(&corpus, Bm25Params { k1: 0.9, b: 1.5 }).is_err());
    }

    #[test]
    fn idf_is_positive_even_for_common_terms() {
        assert!(bm25_idf(2, 2) > 0.0);
        assert!(bm25_idf(100, 100) > 0.0);
    }
}
