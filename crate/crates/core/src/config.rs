//! Pipeline configuration, read from a single TOML file.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Command-line flags override individual fields through [`Overrides`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::DEFAULT_BEHAVIOR_THRESHOLD;
use crate::metrics::{
    DEFAULT_DELTA, DEFAULT_EPSILON, DEFAULT_SENSITIVITY_DELTAS, DEFAULT_SENSITIVITY_EPSILONS,
};
use crate::reader::{ConditionTag, PromptVariant, ReaderConfig};
use crate::retrieval::Bm25Params;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RetrieverConfig {
    Bm25 {
        #[serde(default = "default_bm25_name")]
        name: String,
        #[serde(default = "default_k1")]
        k1: f64,
        #[serde(default = "default_b")]
        b: f64,
    },
    /// A run produced elsewhere, in TREC format.
    Import { name: String, run: PathBuf },
}

fn default_bm25_name() -> String {
    "bm25".into()
}
fn default_k1() -> f64 {
    Bm25Params::default().k1
}
fn default_b() -> f64 {
    Bm25Params::default().b
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        RetrieverConfig::Bm25 {
            name: default_bm25_name(),
            k1: default_k1(),
            b: default_b(),
        }
    }
}

impl RetrieverConfig {
    pub fn name(&self) -> &str {
        match self {
            RetrieverConfig::Bm25 { name, .. } | RetrieverConfig::Import { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockScorerMode {
    Identity,
    Negate,
    GoldAware,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerSpec {
    Http {
        endpoint: String,
        #[serde(default)]
        headers: BTreeMap<String, String>,
        #[serde(default)]
        auth_token_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    Mock {
        mode: MockScorerMode,
    },
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankConfig {
    pub depth: usize,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub scorer: ScorerSpec,
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskingPair {
    pub k_lo: u32,
    pub k_hi: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub epsilon: f64,
    pub delta: u32,
    pub behavior_threshold: f64,
    pub sensitivity_epsilons: Vec<f64>,
    pub sensitivity_deltas: Vec<u32>,
    /// SQuAD-style answer normalization before F1.
    pub normalize_answers: bool,
    /// Depth pair for the truncation check; defaults to the two deepest
    /// grid depths.
    pub masking: Option<MaskingPair>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            delta: DEFAULT_DELTA,
            behavior_threshold: DEFAULT_BEHAVIOR_THRESHOLD,
            sensitivity_epsilons: DEFAULT_SENSITIVITY_EPSILONS.to_vec(),
            sensitivity_deltas: DEFAULT_SENSITIVITY_DELTAS.to_vec(),
            normalize_answers: true,
            masking: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    /// curves.csv to analyze instead of answers.
    pub curves: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: String,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub queries: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub k_grid: Vec<u32>,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<ConditionTag>,
    /// When set, every reader is swept once per variant; otherwise each
    /// reader uses its own `prompt_variant`.
    #[serde(default)]
    pub variants: Option<Vec<PromptVariant>>,
    #[serde(default)]
    pub retriever: RetrieverConfig,
    #[serde(default)]
    pub rerank: Option<RerankConfig>,
    #[serde(default)]
    pub readers: Vec<ReaderConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub replay: Option<ReplayConfig>,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_conditions() -> Vec<ConditionTag> {
    vec![ConditionTag::TopK, ConditionTag::NoContext]
}

/// Command-line overrides; `None` leaves the config value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub k_grid: Option<Vec<u32>>,
    pub epsilon: Option<f64>,
    pub delta: Option<u32>,
    pub behavior_threshold: Option<f64>,
    pub curves: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Parses and validates TOML text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    /// Applies overrides and re-validates. Override paths are taken as given
    /// (relative to the working directory), not relative to the config file.
    pub fn apply(&mut self, overrides: &Overrides) -> Result<(), ConfigError> {
        let cwd = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                std::env::current_dir()
                    .map(|d| d.join(p))
                    .unwrap_or_else(|_| p.clone())
            }
        };
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = cwd(dir);
        }
        if let Some(grid) = &overrides.k_grid {
            self.k_grid = grid.clone();
        }
        if let Some(eps) = overrides.epsilon {
            self.metrics.epsilon = eps;
        }
        if let Some(delta) = overrides.delta {
            self.metrics.delta = delta;
        }
        if let Some(t) = overrides.behavior_threshold {
            self.metrics.behavior_threshold = t;
        }
        if let Some(curves) = &overrides.curves {
            self.replay = Some(ReplayConfig {
                curves: cwd(curves),
            });
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.dataset.trim().is_empty() {
            return invalid("dataset is empty".into());
        }
        if self.k_grid.is_empty() {
            return invalid("k_grid is empty".into());
        }
        if self.k_grid[0] == 0 {
            return invalid("k_grid depths must be >= 1".into());
        }
        if self.k_grid.windows(2).any(|w| w[1] <= w[0]) {
            return invalid(format!(
                "k_grid {:?} is not strictly increasing",
                self.k_grid
            ));
        }
        if self.conditions.is_empty() {
            return invalid("conditions is empty".into());
        }
        if let Some(variants) = &self.variants {
            if variants.is_empty() {
                return invalid("variants is empty".into());
            }
        }
        if let RetrieverConfig::Bm25 { k1, b, .. } = &self.retriever {
            Bm25Params { k1: *k1, b: *b }
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.retriever.name().trim().is_empty() {
            return invalid("retriever name is empty".into());
        }
        if let Some(rerank) = &self.rerank {
            if rerank.depth == 0 || rerank.depth > self.max_k() as usize {
                return invalid(format!(
                    "rerank depth {} must be in 1..={}",
                    rerank.depth,
                    self.max_k()
                ));
            }
        }
        let mut names = BTreeSet::new();
        for reader in &self.readers {
            reader
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if !names.insert(reader.reader_name.as_str()) {
                return invalid(format!("reader {:?} is listed twice", reader.reader_name));
            }
        }
        let m = &self.metrics;
        if !(m.epsilon > 0.0 && m.epsilon.is_finite()) {
            return invalid(format!("metrics.epsilon must be > 0, got {}", m.epsilon));
        }
        if m.delta == 0 {
            return invalid("metrics.delta must be >= 1".into());
        }
        if !(m.behavior_threshold >= 0.0 && m.behavior_threshold.is_finite()) {
            return invalid("metrics.behavior_threshold must be >= 0".into());
        }
        if m.sensitivity_epsilons.is_empty() || m.sensitivity_deltas.is_empty() {
            return invalid("sensitivity ranges must be non-empty".into());
        }
        if m.sensitivity_epsilons
            .iter()
            .any(|e| !(*e > 0.0 && e.is_finite()))
            || m.sensitivity_deltas.contains(&0)
        {
            return invalid("sensitivity ranges must be positive".into());
        }
        if let Some(pair) = m.masking {
            if pair.k_lo >= pair.k_hi
                || !self.k_grid.contains(&pair.k_lo)
                || !self.k_grid.contains(&pair.k_hi)
            {
                return invalid(format!(
                    "metrics.masking needs two grid depths with k_lo < k_hi, got {}/{}",
                    pair.k_lo, pair.k_hi
                ));
            }
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.output_dir().join(name)
    }

    pub fn max_k(&self) -> u32 {
        *self.k_grid.last().expect("validated non-empty")
    }

    pub fn corpus_path(&self) -> Result<PathBuf, ConfigError> {
        self.corpus
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| ConfigError::Invalid("`corpus` is required for this command".into()))
    }

    pub fn queries_path(&self) -> Result<PathBuf, ConfigError> {
        self.queries
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| ConfigError::Invalid("`queries` is required for this command".into()))
    }

    /// Name carried by the run the readers see.
    pub fn run_name(&self) -> String {
        match &self.rerank {
            Some(_) => format!("{}+rerank", self.retriever.name()),
            None => self.retriever.name().to_owned(),
        }
    }

    /// Every (reader, variant) pair to sweep, in config order.
    pub fn reader_variants(&self) -> Vec<ReaderConfig> {
        let mut out = Vec::new();
        for reader in &self.readers {
            match &self.variants {
                None => out.push(reader.clone()),
                Some(variants) => {
                    for &variant in variants {
                        let mut r = reader.clone();
                        r.prompt_variant = variant;
                        out.push(r);
                    }
                }
            }
        }
        out
    }

    /// SHA-256 over the canonical JSON form of the effective configuration,
    /// leaving out the output directory so that identical experiments written
    /// to different places share a hash.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reader::BackendSpec;

    const FULL: &str = r#"
dataset = "toy"
corpus = "corpus.jsonl"
queries = "queries.jsonl"
output_dir = "out"
k_grid = [1, 2, 5]
conditions = ["top_k", "top_gold", "no_context"]
variants = ["standard", "relevant"]

[retriever]
kind = "bm25"
k1 = 1.2

[rerank]
depth = 2
scorer = { kind = "mock", mode = "gold_aware" }

[[readers]]
reader_name = "echo"
backend = { kind = "mock" }

[[readers]]
reader_name = "remote"
context_token_budget = 4000
backend = { kind = "http", endpoint = "http://127.0.0.1:9/generate", auth_token_env = "READER_TOKEN" }

[metrics]
epsilon = 0.6
masking = { k_lo = 2, k_hi = 5 }
"#;

    #[test]
    fn parses_full_example() {
        let cfg = PipelineConfig::parse(FULL, Path::new("/data/exp")).unwrap();
        assert_eq!(
            cfg.corpus_path().unwrap(),
            Path::new("/data/exp/corpus.jsonl")
        );
        assert_eq!(cfg.output_dir(), Path::new("/data/exp/out"));
        assert_eq!(
            cfg.retriever,
            RetrieverConfig::Bm25 {
                name: "bm25".into(),
                k1: 1.2,
                b: 0.4
            }
        );
        assert_eq!(cfg.run_name(), "bm25+rerank");
        assert_eq!(cfg.reader_variants().len(), 4);
        assert_eq!(cfg.readers[1].context_token_budget, 4000);
        assert!(matches!(cfg.readers[0].backend, BackendSpec::Mock { .. }));
        assert_eq!(cfg.metrics.epsilon, 0.6);
        assert_eq!(cfg.metrics.delta, DEFAULT_DELTA);
        assert_eq!(cfg.metrics.sensitivity_deltas, vec![5, 10]);
    }

    #[test]
    fn minimal_defaults() {
        let cfg = PipelineConfig::parse(
            "dataset = \"d\"\noutput_dir = \"o\"\nk_grid = [1]\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(
            cfg.conditions,
            vec![ConditionTag::TopK, ConditionTag::NoContext]
        );
        assert_eq!(cfg.retriever.name(), "bm25");
        assert!(cfg.corpus_path().is_err());
    }

    fn rejects(text: &str) {
        assert!(
            PipelineConfig::parse(text, Path::new(".")).is_err(),
            "accepted: {text}"
        );
    }

    #[test]
    fn invalid_grids_and_fields() {
        rejects("dataset = \"d\"\noutput_dir = \"o\"\nk_grid = []\n");
        rejects("dataset = \"d\"\noutput_dir = \"o\"\nk_grid = [2, 1]\n");
        rejects("dataset = \"d\"\noutput_dir = \"o\"\nk_grid = [0, 1]\n");
        rejects("dataset = \"d\"\noutput_dir = \"o\"\nk_grid = [1]\nunknown = 3\n");
        rejects("dataset = \"d\"\noutput_dir = \"o\"\nk_grid = [1]\n[metrics]\nepsilon = 0\n");
        rejects(
            "dataset = \"d\"\noutput_dir = \"o\"\nk_grid = [1, 2]\n[rerank]\ndepth = 3\nscorer = { kind = \"mock\", mode = \"identity\" }\n",
        );
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let base = PipelineConfig::parse(FULL, Path::new("/a")).unwrap();
        let mut moved = base.clone();
        moved
            .apply(&Overrides {
                output_dir: Some("/elsewhere".into()),
                ..Default::default()
            })
            .unwrap();
        assert_eq!(base.hash(), moved.hash());
        let mut changed = base.clone();
        changed
            .apply(&Overrides {
                epsilon: Some(0.7),
                ..Default::default()
            })
            .unwrap();
        assert_ne!(base.hash(), changed.hash());
    }

    #[test]
    fn overrides_are_validated() {
        let mut cfg = PipelineConfig::parse(FULL, Path::new(".")).unwrap();
        let bad = Overrides {
            k_grid: Some(vec![5, 2]),
            ..Default::default()
        };
        assert!(cfg.apply(&bad).is_err());
    }
}
