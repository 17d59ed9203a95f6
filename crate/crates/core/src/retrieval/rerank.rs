//! Second-stage reordering of the head of a run by an external relevance
//! scorer.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};

use super::run::{RetrievalRun, RunEntry};
use super::RetrievalError;
use crate::dataset::{Corpus, QuerySet};

#[derive(Debug, Clone)]
pub struct Candidate {
    pub passage_id: String,
    pub text: String,
    /// Score from the first-stage retriever.
    pub retrieval_score: f64,
}

#[derive(Debug, Clone)]
pub struct ScoreRequest {
    pub query_id: String,
    pub question: String,
    pub candidates: Vec<Candidate>,
}

/// Returns one relevance score per candidate, aligned by position.
#[async_trait]
pub trait RelevanceScorer: Send + Sync {
    async fn score(&self, request: &ScoreRequest) -> Result<Vec<f64>, String>;
}

/// Deterministic scorers for tests and dry runs.
#[derive(Debug, Clone)]
pub enum MockScorer {
    /// Echoes the first-stage score, so the order is unchanged.
    Identity,
    /// Negated first-stage score, which reverses the head.
    Negate,
    /// 1 for gold passages of the query, 0 otherwise.
    GoldAware(HashMap<String, HashSet<String>>),
}

impl MockScorer {
    pub fn gold_aware(queries: &QuerySet) -> Self {
        MockScorer::GoldAware(
            queries
                .iter()
                .map(|q| {
                    (
                        q.query_id.clone(),
                        q.gold_passage_ids.iter().cloned().collect(),
                    )
                })
                .collect(),
        )
    }
}

#[async_trait]
impl RelevanceScorer for MockScorer {
    async fn score(&self, request: &ScoreRequest) -> Result<Vec<f64>, String> {
        let scores = match self {
            MockScorer::Identity => request
                .candidates
                .iter()
                .map(|c| c.retrieval_score)
                .collect(),
            MockScorer::Negate => request
                .candidates
                .iter()
                .map(|c| -c.retrieval_score)
                .collect(),
            MockScorer::GoldAware(gold) => {
                let gold = gold.get(&request.query_id);
                request
                    .candidates
                    .iter()
                    .map(|c| match gold {
                        Some(set) if set.contains(&c.passage_id) => 1.0,
                        _ => 0.0,
                    })
                    .collect()
            }
        };
        Ok(scores)
    }
}

#[derive(Serialize)]
struct HttpPassage<'a> {
    passage_id: &'a str,
    text: &'a str,
}

#[derive(Serialize)]
struct HttpScoreRequest<'a> {
    question: &'a str,
    passages: Vec<HttpPassage<'a>>,
}

#[derive(Deserialize)]
struct HttpScoreResponse {
    scores: Vec<f64>,
}

/// Scorer backed by an HTTP service:
/// `{"question", "passages": [{"passage_id", "text"}]}` in,
/// `{"scores": [..]}` out.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    client: reqwest::Client,
    endpoint: String,
    headers: Vec<(String, String)>,
}

impl HttpScorer {
    pub fn new(
        endpoint: impl Into<String>,
        headers: Vec<(String, String)>,
        timeout: Duration,
    ) -> Result<Self, RetrievalError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RetrievalError::InvalidParams(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint: endpoint.into(),
            headers,
        })
    }
}

#[async_trait]
impl RelevanceScorer for HttpScorer {
    async fn score(&self, request: &ScoreRequest) -> Result<Vec<f64>, String> {
        let body = HttpScoreRequest {
            question: &request.question,
            passages: request
                .candidates
                .iter()
                .map(|c| HttpPassage {
                    passage_id: &c.passage_id,
                    text: &c.text,
                })
                .collect(),
        };
        let mut builder = self.client.post(&self.endpoint).json(&body);
        for (name, value) in &self.headers {
            builder = builder.header(name, value);
        }
        let response = builder.send().await.map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("scorer returned HTTP {status}"));
        }
        let parsed: HttpScoreResponse = response.json().await.map_err(|e| e.to_string())?;
        Ok(parsed.scores)
    }
}

/// Reorders the first `depth` entries of every query by scorer score
/// (descending, original rank breaks ties) and leaves the tail in place.
///
/// Reordered entries carry the scorer's score. Tail entries keep their
/// original score, clamped to the lowest head score so that scores stay
/// non-increasing with rank.
pub async fn rerank(
    run: &RetrievalRun,
    queries: &QuerySet,
    corpus: &Corpus,
    scorer: &dyn RelevanceScorer,
    depth: usize,
    parallelism: usize,
) -> Result<RetrievalRun, RetrievalError> {
    if depth == 0 || depth > run.max_k() {
        return Err(RetrievalError::InvalidDepth(depth));
    }
    let mut requests = Vec::new();
    for (query_id, entries) in run.iter() {
        let query = queries
            .get(query_id)
            .ok_or_else(|| RetrievalError::UnknownQuery(query_id.to_owned()))?;
        let head = &entries[..depth.min(entries.len())];
        let candidates = head
            .iter()
            .map(|e| {
                let passage = corpus
                    .get(&e.passage_id)
                    .ok_or_else(|| RetrievalError::UnknownPassage(e.passage_id.clone()))?;
                Ok(Candidate {
                    passage_id: e.passage_id.clone(),
                    text: passage.text.clone(),
                    retrieval_score: e.score,
                })
            })
            .collect::<Result<Vec<_>, RetrievalError>>()?;
        requests.push(ScoreRequest {
            query_id: query_id.to_owned(),
            question: query.question.clone(),
            candidates,
        });
    }

    let scored: Vec<(String, Vec<f64>)> = stream::iter(requests)
        .map(|request| async move {
            let scores =
                scorer
                    .score(&request)
                    .await
                    .map_err(|message| RetrievalError::Scorer {
                        query_id: request.query_id.clone(),
                        message,
                    })?;
            if scores.len() != request.candidates.len() {
                return Err(RetrievalError::Scorer {
                    query_id: request.query_id.clone(),
                    message: format!(
                        "expected {} scores, got {}",
                        request.candidates.len(),
                        scores.len()
                    ),
                });
            }
            if scores.iter().any(|s| !s.is_finite()) {
                return Err(RetrievalError::Scorer {
                    query_id: request.query_id.clone(),
                    message: "non-finite score".into(),
                });
            }
            Ok((request.query_id, scores))
        })
        .buffer_unordered(parallelism.max(1))
        .try_collect()
        .await?;

    let mut rankings = BTreeMap::new();
    for (query_id, scores) in scored {
        let entries = run.ranking(&query_id);
        let mut head: Vec<(f64, &RunEntry)> = scores.into_iter().zip(entries).collect();
        head.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.rank.cmp(&b.1.rank)));
        let floor = head.last().map_or(f64::INFINITY, |h| h.0);
        let reordered = head
            .iter()
            .map(|(score, e)| (e.passage_id.clone(), *score))
            .chain(
                entries[head.len()..]
                    .iter()
                    .map(|e| (e.passage_id.clone(), e.score.min(floor))),
            )
            .enumerate()
            .map(|(i, (passage_id, score))| RunEntry {
                passage_id,
                score,
                rank: i as u32 + 1,
            })
            .collect();
        rankings.insert(query_id, reordered);
    }
    Ok(RetrievalRun::from_validated(
        format!("{}+rerank", run.retriever_name()),
        rankings,
    ))
}
