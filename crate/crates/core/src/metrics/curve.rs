use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::f1::{unigram_f1_with, F1Options};
use super::MetricsError;
use crate::dataset::QuerySet;
use crate::reader::ReaderAnswer;

/// Identifies one (dataset, retriever, reader, condition, variant) cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CurveLabel {
    pub dataset: String,
    pub retriever: String,
    pub reader: String,
    pub condition: String,
    pub variant: String,
}

impl fmt::Display for CurveLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{}",
            self.dataset, self.retriever, self.reader, self.condition, self.variant
        )
    }
}

impl CurveLabel {
    pub fn matches(&self, answer: &ReaderAnswer) -> bool {
        answer.retriever == self.retriever
            && answer.reader == self.reader
            && answer.condition.as_str() == self.condition
            && answer.variant.as_str() == self.variant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: u32,
    /// Mean unigram F1, 0-100.
    pub f1: f64,
}

/// Aggregate F1 as a function of retrieval depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCurve {
    label: CurveLabel,
    points: Vec<CurvePoint>,
}

impl PerformanceCurve {
    pub fn new(label: CurveLabel, points: Vec<CurvePoint>) -> Result<Self, MetricsError> {
        if points.is_empty() {
            return Err(MetricsError::InvalidCurve(format!("{label}: no points")));
        }
        for pair in points.windows(2) {
            if pair[1].k <= pair[0].k {
                return Err(MetricsError::InvalidCurve(format!(
                    "{label}: depths not strictly increasing at k={}",
                    pair[1].k
                )));
            }
        }
        if let Some(p) = points.iter().find(|p| !(0.0..=100.0).contains(&p.f1)) {
            return Err(MetricsError::InvalidCurve(format!(
                "{label}: f1 {} at k={} outside [0, 100]",
                p.f1, p.k
            )));
        }
        Ok(Self { label, points })
    }

    /// Convenience constructor from `(k, f1)` pairs.
    pub fn from_pairs(
        label: CurveLabel,
        pairs: impl IntoIterator<Item = (u32, f64)>,
    ) -> Result<Self, MetricsError> {
        Self::new(
            label,
            pairs
                .into_iter()
                .map(|(k, f1)| CurvePoint { k, f1 })
                .collect(),
        )
    }

    pub fn label(&self) -> &CurveLabel {
        &self.label
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ks(&self) -> Vec<u32> {
        self.points.iter().map(|p| p.k).collect()
    }

    pub fn f1_at(&self, k: u32) -> Option<f64> {
        self.points
            .binary_search_by_key(&k, |p| p.k)
            .ok()
            .map(|i| self.points[i].f1)
    }

    /// Keeps only the given depths; fails if any is missing.
    pub fn restrict_to(&self, grid: &[u32]) -> Result<Self, MetricsError> {
        let mut points = Vec::with_capacity(grid.len());
        for &k in grid {
            let f1 = self.f1_at(k).ok_or_else(|| MetricsError::GridMismatch {
                label: self.label.to_string(),
                k,
            })?;
            points.push(CurvePoint { k, f1 });
        }
        Self::new(self.label.clone(), points)
    }

    /// Same depths with `f` applied to every F1; fails if a value leaves [0, 100].
    pub fn map_f1(&self, f: impl Fn(f64) -> f64) -> Result<Self, MetricsError> {
        Self::new(
            self.label.clone(),
            self.points
                .iter()
                .map(|p| CurvePoint {
                    k: p.k,
                    f1: f(p.f1),
                })
                .collect(),
        )
    }
}

/// Mean unigram F1 over a set of answers. Error-flagged answers are scored
/// with their recorded (usually empty) text.
pub fn mean_f1<'a>(
    answers: impl IntoIterator<Item = &'a ReaderAnswer>,
    queries: &QuerySet,
    options: F1Options,
) -> Result<Option<f64>, MetricsError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for answer in answers {
        let query = queries
            .get(&answer.query_id)
            .ok_or_else(|| MetricsError::UnknownQuery(answer.query_id.clone()))?;
        sum += unigram_f1_with(&answer.answer, &query.gold_answers, options)?;
        n += 1;
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Builds the curve for `label` from the matching answers: one point per
/// depth, each the mean F1 over the answers at that depth.
pub fn build_curve(
    answers: &[ReaderAnswer],
    queries: &QuerySet,
    label: CurveLabel,
    options: F1Options,
) -> Result<PerformanceCurve, MetricsError> {
    let mut by_k: BTreeMap<u32, Vec<&ReaderAnswer>> = BTreeMap::new();
    for answer in answers.iter().filter(|a| label.matches(a)) {
        by_k.entry(answer.k).or_default().push(answer);
    }
    if by_k.is_empty() {
        return Err(MetricsError::NoAnswers(label.to_string()));
    }
    let mut points = Vec::with_capacity(by_k.len());
    for (k, group) in by_k {
        let f1 = mean_f1(group, queries, options)?.unwrap_or(0.0);
        points.push(CurvePoint { k, f1 });
    }
    PerformanceCurve::new(label, points)
}
