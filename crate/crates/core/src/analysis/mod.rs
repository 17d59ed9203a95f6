//! Analyses over curves and runs: evidence slices, closed-book comparison,
//! reader behavior under increasing depth and retriever deltas.

use serde::{Deserialize, Serialize};

mod slice;
mod verdict;

pub use slice::{slice_queries, MultihopRule, SliceKind, SlicePartition, SlicePredicate};
pub use verdict::{
    closed_book_verdict, gain_over_closed_book, ClosedBookVerdict, GainMode, Verdict,
};

use crate::metrics::{optimal_k, MetricsError, PerformanceCurve};

pub const DEFAULT_BEHAVIOR_THRESHOLD: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("run reaches depth {max_k}, need {k}")]
    RunTooShallow { max_k: usize, k: usize },
    #[error("{0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    ImproveThenPlateau,
    PeakThenDecline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorClass {
    pub class: Behavior,
    pub k_star: u32,
    /// F1(k*) - F1 at the deepest evaluated k.
    pub peak_drop: f64,
    pub threshold_used: f64,
}

/// A curve declines after its peak when it loses at least `threshold` F1
/// points between k* and the deepest depth, with k* short of that depth.
pub fn classify_behavior(
    curve: &PerformanceCurve,
    threshold: f64,
) -> Result<BehaviorClass, AnalysisError> {
    if curve.len() < 3 {
        return Err(MetricsError::TooFewPoints {
            needed: 3,
            found: curve.len(),
        }
        .into());
    }
    let k_star = optimal_k(curve);
    let last = curve.points()[curve.len() - 1];
    let peak_drop = curve.f1_at(k_star).expect("k* on curve") - last.f1;
    let class = if peak_drop >= threshold && k_star < last.k {
        Behavior::PeakThenDecline
    } else {
        Behavior::ImproveThenPlateau
    };
    Ok(BehaviorClass {
        class,
        k_star,
        peak_drop,
        threshold_used: threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrieverDelta {
    /// Mean over the grid of F1_a(k) - F1_b(k).
    pub average_difference: f64,
    /// F1_a(k*_a) - F1_b(k*_b).
    pub optimal_difference: f64,
}

pub fn retriever_delta(
    a: &PerformanceCurve,
    b: &PerformanceCurve,
    grid: &[u32],
) -> Result<RetrieverDelta, AnalysisError> {
    if grid.is_empty() {
        return Err(AnalysisError::InvalidInput("empty grid".into()));
    }
    let a = a.restrict_to(grid)?;
    let b = b.restrict_to(grid)?;
    let average_difference = a
        .points()
        .iter()
        .zip(b.points())
        .map(|(pa, pb)| pa.f1 - pb.f1)
        .sum::<f64>()
        / grid.len() as f64;
    let peak = |c: &PerformanceCurve| c.f1_at(optimal_k(c)).expect("k* on curve");
    Ok(RetrieverDelta {
        average_difference,
        optimal_difference: peak(&a) - peak(&b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::CurveLabel;

    fn curve(retriever: &str, pairs: &[(u32, f64)]) -> PerformanceCurve {
        let label = CurveLabel {
            dataset: "d".into(),
            retriever: retriever.into(),
            reader: "m".into(),
            condition: "top_k".into(),
            variant: "standard".into(),
        };
        PerformanceCurve::from_pairs(label, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn constructed_decline() {
        let c = curve(
            "r",
            &[
                (1, 40.0),
                (2, 45.0),
                (5, 38.0),
                (10, 30.0),
                (20, 25.0),
                (50, 20.0),
            ],
        );
        let b = classify_behavior(&c, DEFAULT_BEHAVIOR_THRESHOLD).unwrap();
        assert_eq!(b.class, Behavior::PeakThenDecline);
        assert_eq!(b.peak_drop, 25.0);
        assert_eq!(b.k_star, 2);
    }

    #[test]
    fn constant_plateaus() {
        let b = classify_behavior(&curve("r", &[(1, 30.0), (2, 30.0), (5, 30.0)]), 2.0).unwrap();
        assert_eq!(b.class, Behavior::ImproveThenPlateau);
        assert_eq!(b.peak_drop, 0.0);
    }

    #[test]
    fn crag_flant5_small_drop() {
        let c = curve(
            "r",
            &[(1, 19.0), (5, 17.0), (10, 18.0), (20, 18.0), (30, 18.0)],
        );
        let b = classify_behavior(&c, 2.0).unwrap();
        assert_eq!(b.class, Behavior::ImproveThenPlateau);
        assert_eq!(b.peak_drop, 1.0);
    }

    #[test]
    fn peak_at_last_depth_never_declines() {
        let b = classify_behavior(&curve("r", &[(1, 10.0), (2, 5.0), (5, 50.0)]), 2.0).unwrap();
        assert_eq!(b.class, Behavior::ImproveThenPlateau);
    }

    #[test]
    fn too_few_points() {
        assert!(classify_behavior(&curve("r", &[(1, 1.0), (2, 2.0)]), 2.0).is_err());
    }

    #[test]
    fn deltas() {
        let a = curve("a", &[(1, 10.0), (2, 20.0), (5, 15.0)]);
        assert_eq!(
            retriever_delta(&a, &a, &[1, 2, 5]).unwrap(),
            RetrieverDelta {
                average_difference: 0.0,
                optimal_difference: 0.0
            }
        );
        let shifted = curve("b", &[(1, 13.0), (2, 23.0), (5, 18.0)]);
        let d = retriever_delta(&shifted, &a, &[1, 2, 5]).unwrap();
        assert_eq!(d.average_difference, 3.0);
        assert_eq!(d.optimal_difference, 3.0);
        assert!(retriever_delta(&a, &shifted, &[1, 3]).is_err());
    }
}
