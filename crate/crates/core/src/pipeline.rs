//! The five pipeline commands. Each one reads the config plus whatever the
//! previous commands left in the output directory, and writes its own
//! artifacts there.
//!
//! | command  | reads                              | writes                          |
//! |----------|------------------------------------|---------------------------------|
//! | index    | corpus                             | `index.json`                    |
//! | retrieve | corpus, queries, `index.json`      | `run.trec`                      |
//! | sweep    | corpus, queries, `run.trec`        | `answers.jsonl`                 |
//! | evaluate | the above, or a replay curves.csv  | `curves.csv`, `*.json` reports  |
//! | report   | `curves.csv`                       | `report/summary.md`, SVG plots  |

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    classify_behavior, closed_book_verdict, gain_over_closed_book, retriever_delta, slice_queries,
    AnalysisError, BehaviorClass, ClosedBookVerdict, GainMode, RetrieverDelta, SliceKind,
    SlicePartition, SlicePredicate,
};
use crate::config::{
    ConfigError, MaskingPair, MockScorerMode, PipelineConfig, RetrieverConfig, ScorerSpec,
};
use crate::dataset::{Corpus, CorpusStats, DatasetError, QuerySet};
use crate::metrics::{
    build_curve, mean_f1, optimal_k, recall_at_k, rsc, rss, sensitivity_scan, CurveLabel,
    CurvePoint, F1Options, MetricsError, PerformanceCurve, RecallLevel, RecallReport,
    ScalabilityReport, SensitivityReport, StabilityReport,
};
use crate::reader::{
    connect, run_sweep, truncation_masking_check, AnswerStore, ConditionTag, MaskingReport,
    ReaderAnswer, ReaderError, SweepPlan,
};
use crate::report::{build_report, CurveTable, ReportError, SummaryParams};
use crate::retrieval::{
    rerank, Bm25Params, HttpScorer, InvertedIndex, MockScorer, RelevanceScorer, RetrievalError,
    RetrievalRun,
};

pub const INDEX_FILE: &str = "index.json";
pub const RUN_FILE: &str = "run.trec";
pub const ANSWERS_FILE: &str = "answers.jsonl";
pub const CURVES_FILE: &str = "curves.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const VERDICTS_FILE: &str = "verdicts.json";
pub const BEHAVIOR_FILE: &str = "behavior.json";
pub const SLICES_FILE: &str = "slices.json";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Dataset {
        path: PathBuf,
        #[source]
        source: DatasetError,
    },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Reader(#[from] ReaderError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("backend failure: {0}")]
    Backend(String),
}

impl PipelineError {
    /// 2 for reader or scorer backend failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Backend(_) | PipelineError::Retrieval(RetrievalError::Scorer { .. }) => {
                2
            }
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize");
    bytes.push(b'\n');
    bytes
}

fn prepare_output(config: &PipelineConfig) -> Result<PathBuf> {
    let dir = config.output_dir();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let probe = dir.join(".ragged-write-check");
    fs::write(&probe, b"").map_err(|source| {
        PipelineError::Invalid(format!(
            "output directory {} is not writable: {source}",
            dir.display()
        ))
    })?;
    let _ = fs::remove_file(&probe);
    Ok(dir)
}

fn load_corpus(config: &PipelineConfig) -> Result<(Corpus, PathBuf)> {
    let path = config.corpus_path()?;
    let corpus = Corpus::load(&path).map_err(|source| PipelineError::Dataset {
        path: path.clone(),
        source,
    })?;
    Ok((corpus, path))
}

fn load_queries(config: &PipelineConfig, corpus: &Corpus) -> Result<(QuerySet, PathBuf)> {
    let path = config.queries_path()?;
    let queries = QuerySet::load(&path, Some(corpus)).map_err(|source| PipelineError::Dataset {
        path: path.clone(),
        source,
    })?;
    for warning in queries.warnings() {
        tracing::warn!(path = %path.display(), "{warning}");
    }
    Ok((queries, path))
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::Invalid(format!(
            "{} not found; {hint}",
            path.display()
        )))
    }
}

fn load_run(config: &PipelineConfig) -> Result<(RetrievalRun, PathBuf)> {
    let path = config.output_path(RUN_FILE);
    require(&path, "run `ragged retrieve` first")?;
    Ok((RetrievalRun::import(&path, config.run_name())?, path))
}

/// Config hash and content hashes of the inputs a report was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    /// Keyed by role (corpus, queries, run, answers, curves).
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexArtifact {
    corpus_sha256: String,
    index: InvertedIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexOutcome {
    pub path: PathBuf,
    pub stats: CorpusStats,
    /// False when an index for the same corpus and parameters was already there.
    pub rebuilt: bool,
}

fn bm25_params(config: &PipelineConfig) -> Result<Bm25Params> {
    match &config.retriever {
        RetrieverConfig::Bm25 { k1, b, .. } => Ok(Bm25Params { k1: *k1, b: *b }),
        RetrieverConfig::Import { .. } => Err(PipelineError::Invalid(
            "retriever kind `import` does not use an index".into(),
        )),
    }
}

fn read_index(path: &Path) -> Result<IndexArtifact> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Invalid(format!("{}: unreadable index: {e}", path.display())))
}

/// Builds the BM25 index, unless one for the same corpus bytes and
/// parameters already exists.
pub fn cmd_index(config: &PipelineConfig) -> Result<IndexOutcome> {
    let params = bm25_params(config)?;
    let (corpus, corpus_path) = load_corpus(config)?;
    let stats = corpus.stats();
    tracing::info!(
        passages = stats.passage_count,
        documents = stats.doc_count,
        passages_per_document = stats.avg_passages_per_doc,
        "corpus loaded"
    );
    let corpus_sha256 = sha256_file(&corpus_path)?;
    prepare_output(config)?;
    let path = config.output_path(INDEX_FILE);
    if path.exists() {
        match read_index(&path) {
            Ok(existing)
                if existing.corpus_sha256 == corpus_sha256 && existing.index.params() == params =>
            {
                tracing::info!(path = %path.display(), "index is up to date");
                return Ok(IndexOutcome {
                    path,
                    stats,
                    rebuilt: false,
                });
            }
            Ok(_) => tracing::info!("corpus or parameters changed; rebuilding index"),
            Err(e) => tracing::warn!(error = %e, "rebuilding unreadable index"),
        }
    }
    let index = InvertedIndex::build(&corpus, params)?;
    tracing::info!(
        terms = index.vocabulary_size(),
        avg_length = index.avg_doc_length(),
        "index built"
    );
    let artifact = IndexArtifact {
        corpus_sha256,
        index,
    };
    let text = serde_json::to_vec(&artifact).expect("index serializes");
    write_file(&path, &text)?;
    Ok(IndexOutcome {
        path,
        stats,
        rebuilt: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrieveOutcome {
    pub path: PathBuf,
    pub queries: usize,
    pub lines: usize,
    /// Queries with no terms left after tokenization.
    pub skipped: Vec<String>,
}

fn build_scorer(spec: &ScorerSpec, queries: &QuerySet) -> Result<Arc<dyn RelevanceScorer>> {
    Ok(match spec {
        ScorerSpec::Mock { mode } => Arc::new(match mode {
            MockScorerMode::Identity => MockScorer::Identity,
            MockScorerMode::Negate => MockScorer::Negate,
            MockScorerMode::GoldAware => MockScorer::gold_aware(queries),
        }),
        ScorerSpec::Http {
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
                    PipelineError::Invalid(format!("environment variable {var} is not set"))
                })?;
                headers.push(("Authorization".into(), format!("Bearer {token}")));
            }
            Arc::new(HttpScorer::new(
                endpoint.clone(),
                headers,
                Duration::from_secs(*timeout_secs),
            )?)
        }
    })
}

/// Produces `run.trec` to depth max(k_grid), from the BM25 index or an
/// imported run, then applies the reranker if one is configured.
pub async fn cmd_retrieve(config: &PipelineConfig) -> Result<RetrieveOutcome> {
    let (corpus, corpus_path) = load_corpus(config)?;
    let (queries, _) = load_queries(config, &corpus)?;
    prepare_output(config)?;
    let max_k = config.max_k() as usize;
    let mut skipped = Vec::new();
    let mut run = match &config.retriever {
        RetrieverConfig::Bm25 { name, .. } => {
            let index_path = config.output_path(INDEX_FILE);
            require(
                &index_path,
                "the corpus is not indexed; run `ragged index` first",
            )?;
            let artifact = read_index(&index_path)?;
            if artifact.corpus_sha256 != sha256_file(&corpus_path)? {
                return Err(PipelineError::Invalid(format!(
                    "{} was built from a different corpus; run `ragged index` again",
                    index_path.display()
                )));
            }
            let mut lists = Vec::with_capacity(queries.len());
            for query in &queries {
                match artifact.index.search(&query.question, max_k) {
                    Ok(hits) => lists.push((
                        query.query_id.clone(),
                        hits.into_iter().map(|h| (h.passage_id, h.score)).collect(),
                    )),
                    Err(RetrievalError::EmptyQuery(_)) => {
                        tracing::warn!(query = %query.query_id, "question has no indexable terms; skipped");
                        skipped.push(query.query_id.clone());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            RetrievalRun::from_ranked_lists(name.clone(), lists)?
        }
        RetrieverConfig::Import { name, run } => {
            let path = config.resolve(run);
            let run = RetrievalRun::import(&path, name.clone())?;
            if run.max_k() < max_k {
                return Err(PipelineError::Invalid(format!(
                    "{} reaches depth {}, but k_grid needs {max_k}",
                    path.display(),
                    run.max_k()
                )));
            }
            for (query_id, entries) in run.iter() {
                if queries.get(query_id).is_none() {
                    tracing::warn!(
                        query = query_id,
                        "run lists a query that is not in the query set"
                    );
                }
                if let Some(e) = entries.iter().find(|e| !corpus.contains(&e.passage_id)) {
                    return Err(RetrievalError::UnknownPassage(e.passage_id.clone()).into());
                }
            }
            run
        }
    };
    if let Some(rr) = &config.rerank {
        let scorer = build_scorer(&rr.scorer, &queries)?;
        run = rerank(
            &run,
            &queries,
            &corpus,
            scorer.as_ref(),
            rr.depth,
            rr.parallelism,
        )
        .await?;
    }
    let path = config.output_path(RUN_FILE);
    run.export(&path)?;
    let lines = run.iter().map(|(_, e)| e.len()).sum();
    Ok(RetrieveOutcome {
        path,
        queries: run.query_ids().count(),
        lines,
        skipped,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepSummary {
    pub path: PathBuf,
    /// Answers covered by the plan, new and reused.
    pub answers: usize,
    pub backend_calls: usize,
    pub reused: usize,
    pub failures: usize,
    pub unsatisfied: usize,
}

/// Sweeps every configured reader (and prompt variant) over the grid and
/// conditions. Answers already in `answers.jsonl` are kept; only missing or
/// failed cells are generated. Any generation that still fails after retries
/// makes the command end with a backend error once the sweep is complete.
pub async fn cmd_sweep(config: &PipelineConfig) -> Result<SweepSummary> {
    if config.readers.is_empty() {
        return Err(PipelineError::Invalid("no readers configured".into()));
    }
    let (corpus, _) = load_corpus(config)?;
    let (queries, _) = load_queries(config, &corpus)?;
    prepare_output(config)?;
    let (run, _) = load_run(config)?;
    let path = config.output_path(ANSWERS_FILE);
    let mut store = AnswerStore::open(&path)?;
    let mut summary = SweepSummary {
        path: path.clone(),
        ..Default::default()
    };
    for reader in config.reader_variants() {
        let backend = connect(&reader.backend, &queries)?;
        let plan = SweepPlan {
            queries: &queries,
            corpus: &corpus,
            run: &run,
            config: &reader,
            k_grid: &config.k_grid,
            conditions: &config.conditions,
        };
        let outcome = run_sweep(plan, backend.as_ref(), &mut store).await?;
        tracing::info!(
            reader = %reader.reader_name,
            variant = %reader.prompt_variant,
            calls = outcome.backend_calls,
            reused = outcome.reused,
            failures = outcome.failures,
            unsatisfied = outcome.unsatisfied,
            "sweep finished"
        );
        summary.answers += outcome.answers.len();
        summary.backend_calls += outcome.backend_calls;
        summary.reused += outcome.reused;
        summary.failures += outcome.failures;
        summary.unsatisfied += outcome.unsatisfied;
    }
    if summary.failures > 0 {
        return Err(PipelineError::Backend(format!(
            "{} generations failed after retries (recorded with an error in {}); rerun `ragged sweep` to retry them",
            summary.failures,
            path.display()
        )));
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetrics {
    #[serde(flatten)]
    pub label: CurveLabel,
    pub points: Vec<CurvePoint>,
    pub k_star: u32,
    pub f1_at_k_star: f64,
    pub stability: Option<StabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability_error: Option<String>,
    pub scalability: Option<ScalabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scalability_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub dataset: String,
    pub reader: String,
    pub condition: String,
    pub variant: String,
    pub retriever_a: String,
    pub retriever_b: String,
    pub grid: Vec<u32>,
    #[serde(flatten)]
    pub delta: RetrieverDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingEntry {
    pub reader: String,
    pub variant: String,
    pub report: Option<MaskingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub provenance: Provenance,
    pub epsilon: f64,
    pub delta: u32,
    pub curves: Vec<CurveMetrics>,
    /// Ranking invariance over the sensitivity ranges, across all top_k
    /// curves; absent with fewer than two curves.
    pub sensitivity: Option<SensitivityReport>,
    pub retriever_deltas: Vec<DeltaEntry>,
    pub recall: Vec<RecallReport>,
    pub masking: Vec<MaskingEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    #[serde(flatten)]
    pub label: CurveLabel,
    #[serde(flatten)]
    pub verdict: ClosedBookVerdict,
    pub rendered: String,
    pub average_gain: f64,
    pub optimal_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictsDocument {
    pub provenance: Provenance,
    pub entries: Vec<VerdictEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEntry {
    #[serde(flatten)]
    pub label: CurveLabel,
    pub behavior: Option<BehaviorClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorDocument {
    pub provenance: Provenance,
    pub threshold: f64,
    pub entries: Vec<BehaviorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceF1 {
    pub reader: String,
    pub variant: String,
    /// Mean top_k F1 at the slice depth over the slice's queries.
    pub in_slice_f1: Option<f64>,
    pub out_slice_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceEntry {
    #[serde(flatten)]
    pub partition: SlicePartition,
    pub f1: Vec<SliceF1>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicesDocument {
    pub provenance: Provenance,
    pub retriever: String,
    pub slices: Vec<SliceEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutcome {
    pub files: Vec<PathBuf>,
    pub curves: usize,
    pub replay: bool,
}

/// Inputs that only exist when evaluating a sweep, not a replayed curve set.
struct SweepInputs {
    corpus: Corpus,
    queries: QuerySet,
    run: RetrievalRun,
    answers: Vec<ReaderAnswer>,
}

fn f1_options(config: &PipelineConfig) -> F1Options {
    F1Options {
        normalize: config.metrics.normalize_answers,
    }
}

fn table_from_answers(config: &PipelineConfig, inputs: &SweepInputs) -> Result<CurveTable> {
    let options = f1_options(config);
    let mut table = CurveTable::default();
    for reader in config.reader_variants() {
        for &condition in &config.conditions {
            let label = CurveLabel {
                dataset: config.dataset.clone(),
                retriever: inputs.run.retriever_name().to_owned(),
                reader: reader.reader_name.clone(),
                condition: condition.as_str().to_owned(),
                variant: reader.prompt_variant.as_str().to_owned(),
            };
            if condition == ConditionTag::NoContext {
                let matching = inputs.answers.iter().filter(|a| label.matches(a));
                match mean_f1(matching, &inputs.queries, options)? {
                    Some(f1) => {
                        table.no_context.insert(label, f1);
                    }
                    None => tracing::warn!(label = %label, "no closed-book answers"),
                }
                continue;
            }
            match build_curve(&inputs.answers, &inputs.queries, label.clone(), options) {
                Ok(curve) => table.curves.push(curve),
                Err(MetricsError::NoAnswers(_)) => {
                    tracing::warn!(label = %label, "no answers; curve skipped")
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(table)
}

fn curve_metrics(curve: &PerformanceCurve, config: &PipelineConfig) -> CurveMetrics {
    let k_star = optimal_k(curve);
    let (stability, stability_error) = match rss(curve, config.metrics.delta) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let (scalability, scalability_error) = match rsc(curve, config.metrics.epsilon) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    CurveMetrics {
        label: curve.label().clone(),
        points: curve.points().to_vec(),
        k_star,
        f1_at_k_star: curve.f1_at(k_star).expect("k* on curve"),
        stability,
        stability_error,
        scalability,
        scalability_error,
    }
}

fn retriever_deltas(curves: &[&PerformanceCurve]) -> Vec<DeltaEntry> {
    let mut out = Vec::new();
    for (i, a) in curves.iter().enumerate() {
        for b in &curves[i + 1..] {
            let (la, lb) = (a.label(), b.label());
            if la.dataset != lb.dataset
                || la.reader != lb.reader
                || la.condition != lb.condition
                || la.variant != lb.variant
                || la.retriever == lb.retriever
            {
                continue;
            }
            let grid: Vec<u32> = a
                .ks()
                .into_iter()
                .filter(|k| b.f1_at(*k).is_some())
                .collect();
            if grid.is_empty() {
                continue;
            }
            if let Ok(delta) = retriever_delta(a, b, &grid) {
                out.push(DeltaEntry {
                    dataset: la.dataset.clone(),
                    reader: la.reader.clone(),
                    condition: la.condition.clone(),
                    variant: la.variant.clone(),
                    retriever_a: la.retriever.clone(),
                    retriever_b: lb.retriever.clone(),
                    grid,
                    delta,
                });
            }
        }
    }
    out
}

fn masking_pair(config: &PipelineConfig) -> Option<MaskingPair> {
    if config.metrics.masking.is_some() {
        return config.metrics.masking;
    }
    match config.k_grid.as_slice() {
        [.., lo, hi] => Some(MaskingPair {
            k_lo: *lo,
            k_hi: *hi,
        }),
        _ => None,
    }
}

fn masking_entries(config: &PipelineConfig, inputs: &SweepInputs) -> Vec<MaskingEntry> {
    let Some(pair) = masking_pair(config) else {
        return Vec::new();
    };
    let retriever = inputs.run.retriever_name();
    config
        .reader_variants()
        .into_iter()
        .map(|reader| {
            let at = |k: u32| -> Vec<ReaderAnswer> {
                inputs
                    .answers
                    .iter()
                    .filter(|a| {
                        a.k == k
                            && a.condition == ConditionTag::TopK
                            && a.retriever == retriever
                            && a.reader == reader.reader_name
                            && a.variant == reader.prompt_variant
                    })
                    .cloned()
                    .collect()
            };
            let result = truncation_masking_check(
                &at(pair.k_lo),
                &at(pair.k_hi),
                &inputs.queries,
                f1_options(config),
            );
            let (report, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            MaskingEntry {
                reader: reader.reader_name.clone(),
                variant: reader.prompt_variant.as_str().to_owned(),
                report,
                error,
            }
        })
        .collect()
}

fn slice_entries(config: &PipelineConfig, inputs: &SweepInputs) -> Result<Vec<SliceEntry>> {
    let options = f1_options(config);
    let retriever = inputs.run.retriever_name();
    let mut out = Vec::new();
    for &k in &config.k_grid {
        if inputs.run.max_k() < k as usize {
            tracing::warn!(
                k,
                max_k = inputs.run.max_k(),
                "run too shallow for slices at this depth"
            );
            continue;
        }
        for kind in [
            SliceKind::GoldFound,
            SliceKind::NoGold,
            SliceKind::GoldPageOnly,
        ] {
            let partition = slice_queries(
                &inputs.run,
                &inputs.queries,
                &inputs.corpus,
                SlicePredicate {
                    kind,
                    k: k as usize,
                },
            )?;
            let mut f1 = Vec::new();
            for reader in config.reader_variants() {
                let mean_over = |ids: &[String]| {
                    let answers = inputs.answers.iter().filter(|a| {
                        a.k == k
                            && a.condition == ConditionTag::TopK
                            && a.retriever == retriever
                            && a.reader == reader.reader_name
                            && a.variant == reader.prompt_variant
                            && ids.contains(&a.query_id)
                    });
                    mean_f1(answers, &inputs.queries, options)
                };
                f1.push(SliceF1 {
                    reader: reader.reader_name.clone(),
                    variant: reader.prompt_variant.as_str().to_owned(),
                    in_slice_f1: mean_over(&partition.in_slice)?,
                    out_slice_f1: mean_over(&partition.out_slice)?,
                });
            }
            out.push(SliceEntry { partition, f1 });
        }
    }
    Ok(out)
}

fn load_sweep_inputs(
    config: &PipelineConfig,
    hashes: &mut BTreeMap<String, String>,
) -> Result<SweepInputs> {
    let (corpus, corpus_path) = load_corpus(config)?;
    let (queries, queries_path) = load_queries(config, &corpus)?;
    let (run, run_path) = load_run(config)?;
    let answers_path = config.output_path(ANSWERS_FILE);
    require(&answers_path, "run `ragged sweep` first")?;
    let answers = AnswerStore::load(&answers_path)?;
    let failed = answers.iter().filter(|a| a.error.is_some()).count();
    if failed > 0 {
        tracing::warn!(
            failed,
            "answers with backend errors are scored as empty predictions"
        );
    }
    hashes.insert("corpus".into(), sha256_file(&corpus_path)?);
    hashes.insert("queries".into(), sha256_file(&queries_path)?);
    hashes.insert("run".into(), sha256_file(&run_path)?);
    hashes.insert("answers".into(), sha256_file(&answers_path)?);
    Ok(SweepInputs {
        corpus,
        queries,
        run,
        answers,
    })
}

/// Computes curves and every report. With `replay` configured the curves
/// come from a curves.csv and the answer-level reports (recall, slices,
/// truncation check) are left out.
pub fn cmd_evaluate(config: &PipelineConfig) -> Result<EvaluateOutcome> {
    let dir = prepare_output(config)?;
    let mut inputs = BTreeMap::new();
    let (table, sweep) = match &config.replay {
        Some(replay) => {
            let path = config.resolve(&replay.curves);
            let table = CurveTable::read(&path)?;
            inputs.insert("curves".to_owned(), sha256_file(&path)?);
            (table, None)
        }
        None => {
            let sweep = load_sweep_inputs(config, &mut inputs)?;
            (table_from_answers(config, &sweep)?, Some(sweep))
        }
    };
    if table.curves.is_empty() {
        return Err(PipelineError::Invalid("no curves to evaluate".into()));
    }
    let provenance = Provenance {
        config_sha256: config.hash(),
        inputs,
    };
    let mut files = Vec::new();
    let mut emit = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        write_file(&path, bytes)?;
        files.push(path);
        Ok(())
    };

    emit(CURVES_FILE, table.to_csv().as_bytes())?;

    let top_k: Vec<&PerformanceCurve> = table
        .curves
        .iter()
        .filter(|c| c.label().condition == ConditionTag::TopK.as_str())
        .collect();
    let sensitivity = if top_k.len() >= 2 {
        let owned: Vec<PerformanceCurve> = top_k.iter().map(|c| (*c).clone()).collect();
        Some(sensitivity_scan(
            &owned,
            &config.metrics.sensitivity_epsilons,
            &config.metrics.sensitivity_deltas,
        )?)
    } else {
        None
    };
    let mut recall = Vec::new();
    if let Some(s) = &sweep {
        for &k in &config.k_grid {
            for level in [RecallLevel::Passage, RecallLevel::Document] {
                recall.push(recall_at_k(
                    &s.run, &s.queries, &s.corpus, k as usize, level,
                )?);
            }
        }
    }
    let metrics = MetricsDocument {
        provenance: provenance.clone(),
        epsilon: config.metrics.epsilon,
        delta: config.metrics.delta,
        curves: table
            .curves
            .iter()
            .map(|c| curve_metrics(c, config))
            .collect(),
        sensitivity,
        retriever_deltas: retriever_deltas(&top_k),
        recall,
        masking: sweep
            .as_ref()
            .map(|s| masking_entries(config, s))
            .unwrap_or_default(),
    };
    emit(METRICS_FILE, &to_json(&metrics))?;

    let mut verdicts = Vec::new();
    for curve in &table.curves {
        let Some(baseline) = table.baseline_for(curve.label()) else {
            continue;
        };
        let grid = curve.ks();
        let verdict = closed_book_verdict(curve, baseline, &grid)?;
        verdicts.push(VerdictEntry {
            label: curve.label().clone(),
            rendered: verdict.render(),
            verdict,
            average_gain: gain_over_closed_book(curve, baseline, GainMode::Average, &grid)?,
            optimal_gain: gain_over_closed_book(curve, baseline, GainMode::AtOptimal, &grid)?,
        });
    }
    emit(
        VERDICTS_FILE,
        &to_json(&VerdictsDocument {
            provenance: provenance.clone(),
            entries: verdicts,
        }),
    )?;

    let behavior = table
        .curves
        .iter()
        .map(|curve| {
            let (behavior, error) =
                match classify_behavior(curve, config.metrics.behavior_threshold) {
                    Ok(b) => (Some(b), None),
                    Err(e) => (None, Some(e.to_string())),
                };
            BehaviorEntry {
                label: curve.label().clone(),
                behavior,
                error,
            }
        })
        .collect();
    emit(
        BEHAVIOR_FILE,
        &to_json(&BehaviorDocument {
            provenance: provenance.clone(),
            threshold: config.metrics.behavior_threshold,
            entries: behavior,
        }),
    )?;

    if let Some(s) = &sweep {
        let slices = SlicesDocument {
            provenance,
            retriever: s.run.retriever_name().to_owned(),
            slices: slice_entries(config, s)?,
        };
        emit(SLICES_FILE, &to_json(&slices))?;
    }

    Ok(EvaluateOutcome {
        files,
        curves: table.curves.len(),
        replay: sweep.is_none(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
}

/// Renders `report/summary.md` and one SVG per (dataset, retriever) from
/// the evaluated curves.csv. Nothing is written when there are no curves.
pub fn cmd_report(config: &PipelineConfig) -> Result<ReportOutcome> {
    let curves_path = config.output_path(CURVES_FILE);
    if !curves_path.exists() {
        return Err(ReportError::NothingToReport(format!(
            "{} does not exist; run `ragged evaluate` first",
            curves_path.display()
        ))
        .into());
    }
    let table = CurveTable::read(&curves_path)?;
    let params = SummaryParams {
        epsilon: config.metrics.epsilon,
        delta: config.metrics.delta,
        behavior_threshold: config.metrics.behavior_threshold,
        config_hash: Some(config.hash()),
    };
    let report = build_report(&table, &params)?;
    let dir = config.output_dir().join(REPORT_DIR);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut files = Vec::new();
    for (name, contents) in &report.files {
        let path = dir.join(name);
        write_file(&path, contents.as_bytes())?;
        files.push(path);
    }
    Ok(ReportOutcome { files })
}
