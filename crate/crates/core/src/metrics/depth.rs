//! Retrieval-depth diagnostics over a performance curve: the optimal depth
//! k*, the stability score around it and the scalability coefficient.

use serde::{Deserialize, Serialize};

use super::curve::PerformanceCurve;
use super::MetricsError;

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_DELTA: u32 = 5;

/// Absolute slack when comparing a gain against epsilon, so that values
/// rescaled from 0-1 (e.g. 0.23 * 100) do not miss the threshold by an ulp.
pub const GAIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub k_star: u32,
    pub delta: u32,
    /// min F1 over the window (k* excluded) divided by F1(k*).
    pub rss: Option<f64>,
    pub window_points_used: Vec<u32>,
    /// False when no other evaluated depth falls inside [k* - delta, k* + delta].
    pub defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityReport {
    pub epsilon: f64,
    pub k_last_gain: Option<u32>,
    /// Trapezoid area under the curve from the first depth to k_last_gain,
    /// in F1 x depth units.
    pub rsc: f64,
    /// Consecutive depth pairs whose gain reached epsilon.
    pub gain_segments: Vec<(u32, u32)>,
}

/// Depth with the highest F1; the smallest such depth on ties.
pub fn optimal_k(curve: &PerformanceCurve) -> u32 {
    let mut best = curve.points()[0];
    for p in &curve.points()[1..] {
        if p.f1 > best.f1 {
            best = *p;
        }
    }
    best.k
}

pub fn rss(curve: &PerformanceCurve, delta: u32) -> Result<StabilityReport, MetricsError> {
    if delta < 1 {
        return Err(MetricsError::InvalidParameter(format!(
            "delta must be >= 1, got {delta}"
        )));
    }
    if curve.len() < 2 {
        return Err(MetricsError::TooFewPoints {
            needed: 2,
            found: curve.len(),
        });
    }
    let k_star = optimal_k(curve);
    let peak = curve.f1_at(k_star).expect("k* is a curve point");
    if peak == 0.0 {
        return Err(MetricsError::ZeroPeak(curve.label().to_string()));
    }
    let lo = k_star.saturating_sub(delta);
    let hi = k_star.saturating_add(delta);
    let window: Vec<_> = curve
        .points()
        .iter()
        .filter(|p| p.k != k_star && (lo..=hi).contains(&p.k))
        .collect();
    let rss = window
        .iter()
        .map(|p| p.f1)
        .reduce(f64::min)
        .map(|worst| worst / peak);
    Ok(StabilityReport {
        k_star,
        delta,
        rss,
        window_points_used: window.iter().map(|p| p.k).collect(),
        defined: rss.is_some(),
    })
}

/// Accumulates trapezoid area over the leading run of segments whose F1 gain
/// is at least `epsilon`; the first plateau or decline ends the run.
pub fn rsc(curve: &PerformanceCurve, epsilon: f64) -> Result<ScalabilityReport, MetricsError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(MetricsError::InvalidParameter(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    if curve.len() < 2 {
        return Err(MetricsError::TooFewPoints {
            needed: 2,
            found: curve.len(),
        });
    }
    let mut area = 0.0;
    let mut k_last_gain = None;
    let mut gain_segments = Vec::new();
    for pair in curve.points().windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b.f1 - a.f1 < epsilon - GAIN_TOLERANCE {
            break;
        }
        area += 0.5 * f64::from(b.k - a.k) * (a.f1 + b.f1);
        k_last_gain = Some(b.k);
        gain_segments.push((a.k, b.k));
    }
    Ok(ScalabilityReport {
        epsilon,
        k_last_gain,
        rsc: area,
        gain_segments,
    })
}
