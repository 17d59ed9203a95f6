//! Reader backends: a minimal HTTP completion contract and deterministic mocks.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{Decoding, ReaderError};
use crate::dataset::QuerySet;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub decoding: Decoding,
    /// Bookkeeping for mocks; never sent over the wire.
    pub query_id: String,
    pub context_passage_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct BackendError {
    pub message: String,
    pub retryable: bool,
}

impl BackendError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

#[async_trait]
pub trait ReaderBackend: Send + Sync {
    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 500,
        }
    }
}

impl RetryPolicy {
    /// Calls the backend until it succeeds, fails fatally or runs out of
    /// attempts. The error carries the last failure message.
    pub async fn call(
        &self,
        backend: &dyn ReaderBackend,
        request: &GenerationRequest,
    ) -> Result<String, String> {
        let mut backoff = Duration::from_millis(self.initial_backoff_ms);
        let mut attempt = 1;
        loop {
            match backend.generate(request).await {
                Ok(text) => return Ok(text),
                Err(err) if !err.retryable || attempt >= self.max_attempts => {
                    return Err(format!("attempt {attempt}: {}", err.message));
                }
                Err(err) => {
                    tracing::debug!(query = %request.query_id, attempt, error = %err, "retrying");
                    tokio::time::sleep(backoff).await;
                    backoff *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Http {
        endpoint: String,
        #[serde(default)]
        headers: BTreeMap<String, String>,
        /// Environment variable holding a bearer token.
        #[serde(default)]
        auth_token_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    Mock {
        #[serde(default)]
        behavior: MockBehavior,
    },
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockBehavior {
    /// First gold answer when the gold evidence is in context (any gold
    /// passage, or all of them for multi-hop queries), else "unknown".
    #[default]
    GoldEcho,
    /// Always the same text.
    Constant(String),
    /// Every call fails with a retryable error.
    Fail,
}

/// Instantiates the backend described by `spec`. Mocks need the query set to
/// know gold passages and answers.
pub fn connect(
    spec: &BackendSpec,
    queries: &QuerySet,
) -> Result<Arc<dyn ReaderBackend>, ReaderError> {
    match spec {
        BackendSpec::Http {
            endpoint,
            headers,
            auth_token_env,
            timeout_secs,
        } => {
            let mut headers: Vec<(String, String)> = headers
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            if let Some(var) = auth_token_env {
                let token = std::env::var(var).map_err(|_| {
                    ReaderError::Config(format!("environment variable {var} is not set"))
                })?;
                headers.push(("Authorization".into(), format!("Bearer {token}")));
            }
            Ok(Arc::new(HttpBackend::new(
                endpoint.clone(),
                headers,
                Duration::from_secs(*timeout_secs),
            )?))
        }
        BackendSpec::Mock { behavior } => Ok(Arc::new(MockBackend::new(behavior.clone(), queries))),
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
    greedy: bool,
    beam_size: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
    #[serde(default)]
    decoding: Option<serde_json::Value>,
}

/// `{"prompt", "max_tokens", "temperature"}` in, `{"text"}` out. Greedy
/// decoding and beam size are sent alongside the temperature; an optional
/// `decoding` object in the response is logged.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    endpoint: String,
    headers: Vec<(String, String)>,
}

impl HttpBackend {
    pub fn new(
        endpoint: String,
        headers: Vec<(String, String)>,
        timeout: Duration,
    ) -> Result<Self, ReaderError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ReaderError::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint,
            headers,
        })
    }
}

#[async_trait]
impl ReaderBackend for HttpBackend {
    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let body = CompletionRequest {
            prompt: &request.prompt,
            max_tokens: request.max_tokens,
            temperature: request.decoding.temperature,
            greedy: request.decoding.greedy,
            beam_size: request.decoding.beam_size,
        };
        let mut builder = self.client.post(&self.endpoint).json(&body);
        for (name, value) in &self.headers {
            builder = builder.header(name, value);
        }
        let response = builder
            .send()
            .await
            .map_err(|e| BackendError::retryable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let message = format!("HTTP {status}");
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                BackendError::retryable(message)
            } else {
                BackendError::fatal(message)
            });
        }
        let parsed: CompletionResponse = response
            .json()
            .await
            .map_err(|e| BackendError::fatal(format!("bad response body: {e}")))?;
        if let Some(echo) = parsed.decoding {
            tracing::debug!(query = %request.query_id, %echo, "backend decoding echo");
        }
        Ok(parsed.text)
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    behavior: MockBehavior,
    gold: HashMap<String, GoldEvidence>,
}

#[derive(Debug, Clone)]
struct GoldEvidence {
    passages: HashSet<String>,
    needs_all: bool,
    answer: String,
}

impl GoldEvidence {
    fn satisfied_by(&self, context: &[String]) -> bool {
        if self.needs_all {
            self.passages.iter().all(|g| context.contains(g))
        } else {
            context.iter().any(|p| self.passages.contains(p))
        }
    }
}

impl MockBackend {
    pub fn new(behavior: MockBehavior, queries: &QuerySet) -> Self {
        let gold = queries
            .iter()
            .map(|q| {
                (
                    q.query_id.clone(),
                    GoldEvidence {
                        passages: q.gold_passage_ids.iter().cloned().collect(),
                        needs_all: q.multihop,
                        answer: q.gold_answers[0].clone(),
                    },
                )
            })
            .collect();
        Self { behavior, gold }
    }
}

#[async_trait]
impl ReaderBackend for MockBackend {
    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        match &self.behavior {
            MockBehavior::Constant(text) => Ok(text.clone()),
            MockBehavior::Fail => Err(BackendError::retryable("mock failure")),
            MockBehavior::GoldEcho => {
                let hit = self
                    .gold
                    .get(&request.query_id)
                    .filter(|g| {
                        !g.passages.is_empty() && g.satisfied_by(&request.context_passage_ids)
                    })
                    .map(|g| g.answer.clone());
                Ok(hit.unwrap_or_else(|| "unknown".to_owned()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Query;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn request(ids: &[&str]) -> GenerationRequest {
        GenerationRequest {
            prompt: "p".into(),
            max_tokens: 10,
            decoding: Decoding::default(),
            query_id: "q1".into(),
            context_passage_ids: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn queries() -> QuerySet {
        QuerySet::from_queries(vec![Query {
            query_id: "q1".into(),
            question: "?".into(),
            gold_answers: vec!["Blue whale".into(), "whale".into()],
            gold_passage_ids: vec!["p1".into()],
            gold_doc_ids: vec![],
            multihop: false,
        }])
        .unwrap()
    }

    #[tokio::test]
    async fn gold_echo_mock() {
        let mock = MockBackend::new(MockBehavior::GoldEcho, &queries());
        assert_eq!(
            mock.generate(&request(&["p3", "p1"])).await.unwrap(),
            "Blue whale"
        );
        assert_eq!(mock.generate(&request(&["p3"])).await.unwrap(), "unknown");
    }

    #[tokio::test]
    async fn gold_echo_multihop_needs_all() {
        let qs = QuerySet::from_queries(vec![Query {
            query_id: "q1".into(),
            question: "?".into(),
            gold_answers: vec!["A and B".into()],
            gold_passage_ids: vec!["p1".into(), "p2".into()],
            gold_doc_ids: vec![],
            multihop: true,
        }])
        .unwrap();
        let mock = MockBackend::new(MockBehavior::GoldEcho, &qs);
        assert_eq!(
            mock.generate(&request(&["p1", "p3"])).await.unwrap(),
            "unknown"
        );
        assert_eq!(
            mock.generate(&request(&["p2", "p1"])).await.unwrap(),
            "A and B"
        );
    }

    struct Flaky {
        calls: AtomicU32,
        fail_first: u32,
        retryable: bool,
    }

    #[async_trait]
    impl ReaderBackend for Flaky {
        async fn generate(&self, _: &GenerationRequest) -> Result<String, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(BackendError {
                    message: "boom".into(),
                    retryable: self.retryable,
                })
            } else {
                Ok("ok".into())
            }
        }
    }

    fn fast() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 1,
        }
    }

    #[tokio::test]
    async fn retries_until_success() {
        let backend = Flaky {
            calls: AtomicU32::new(0),
            fail_first: 2,
            retryable: true,
        };
        assert_eq!(fast().call(&backend, &request(&[])).await.unwrap(), "ok");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[tokio::test]
    async fn gives_up_after_max_attempts() {
        let backend = Flaky {
            calls: AtomicU32::new(0),
            fail_first: 10,
            retryable: true,
        };
        let err = fast().call(&backend, &request(&[])).await.unwrap_err();
        assert!(err.contains("attempt 3"));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[tokio::test]
    async fn fatal_errors_are_not_retried() {
        let backend = Flaky {
            calls: AtomicU32::new(0),
            fail_first: 10,
            retryable: false,
        };
        assert!(fast().call(&backend, &request(&[])).await.is_err());
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backend_spec_toml_shape() {
        let spec: BackendSpec =
            toml::from_str("kind = \"http\"\nendpoint = \"http://localhost:9/v1\"\n").unwrap();
        assert!(matches!(
            spec,
            BackendSpec::Http {
                timeout_secs: 60,
                ..
            }
        ));
        let spec: BackendSpec = toml::from_str("kind = \"mock\"\n").unwrap();
        assert_eq!(
            spec,
            BackendSpec::Mock {
                behavior: MockBehavior::GoldEcho
            }
        );
    }
}
