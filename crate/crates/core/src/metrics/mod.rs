//! Pure metric kernels. Every F1 value here is on the 0-100 scale.

mod curve;
mod depth;
mod f1;
mod recall;
mod sensitivity;

pub use curve::{build_curve, mean_f1, CurveLabel, CurvePoint, PerformanceCurve};
pub use depth::{
    optimal_k, rsc, rss, ScalabilityReport, StabilityReport, DEFAULT_DELTA, DEFAULT_EPSILON,
    GAIN_TOLERANCE,
};
pub use f1::{answer_tokens, normalize_answer, token_f1, unigram_f1, unigram_f1_with, F1Options};
pub use recall::{recall_at_k, RecallLevel, RecallReport};
pub use sensitivity::{
    sensitivity_scan, F1Spread, RankFlip, SensitivityReport, SettingRanking,
    DEFAULT_SENSITIVITY_DELTAS, DEFAULT_SENSITIVITY_EPSILONS,
};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("gold_answers is empty")]
    EmptyGoldAnswers,
    #[error("invalid depth {0}")]
    InvalidDepth(usize),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("no answers for {0}")]
    NoAnswers(String),
    #[error("answer references unknown query {0:?}")]
    UnknownQuery(String),
    #[error("curve needs at least {needed} points, has {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("peak F1 is zero for {0}")]
    ZeroPeak(String),
    #[error("{label}: no point at k={k}")]
    GridMismatch { label: String, k: u32 },
    #[error("{0}")]
    InvalidParameter(String),
}
