use serde::{Deserialize, Serialize};

use super::curve::PerformanceCurve;
use super::depth::{rsc, rss};
use super::MetricsError;

pub const DEFAULT_SENSITIVITY_EPSILONS: [f64; 3] = [0.5, 0.6, 0.7];
pub const DEFAULT_SENSITIVITY_DELTAS: [u32; 2] = [5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRanking {
    pub epsilon: f64,
    pub delta: u32,
    /// Curve labels, best first. Curves whose metric is undefined go last.
    pub rsc_ranking: Vec<String>,
    pub rss_ranking: Vec<String>,
}

/// A pair of curves whose relative order differs from the baseline setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankFlip {
    pub metric: String,
    /// Ranked above `lower` under the baseline setting.
    pub higher: String,
    pub lower: String,
    pub baseline: (f64, u32),
    pub setting: (f64, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Spread {
    /// Mean over curves of the population standard deviation of F1 across depths.
    pub mean_std: f64,
    pub max_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub epsilons: Vec<f64>,
    pub deltas: Vec<u32>,
    pub settings: Vec<SettingRanking>,
    pub invariant: bool,
    pub flips: Vec<RankFlip>,
    pub f1_std: F1Spread,
}

fn rank(names: &[String], values: &[Option<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    // descending by value, undefined last, input order on ties
    order.sort_by(|&a, &b| match (values[a], values[b]) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.cmp(&b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    order
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn flips_between(
    metric: &str,
    names: &[String],
    baseline: &[usize],
    other: &[usize],
    baseline_setting: (f64, u32),
    setting: (f64, u32),
) -> Vec<RankFlip> {
    let mut position = vec![0; other.len()];
    for (pos, &idx) in other.iter().enumerate() {
        position[idx] = pos;
    }
    let mut flips = Vec::new();
    for i in 0..baseline.len() {
        for j in i + 1..baseline.len() {
            let (hi, lo) = (baseline[i], baseline[j]);
            if position[hi] > position[lo] {
                flips.push(RankFlip {
                    metric: metric.to_owned(),
                    higher: names[hi].clone(),
                    lower: names[lo].clone(),
                    baseline: baseline_setting,
                    setting,
                });
            }
        }
    }
    flips
}

/// Ranks curves by RSC and by RSS under every (epsilon, delta) pair and
/// checks that both orders match the first pair's.
pub fn sensitivity_scan(
    curves: &[PerformanceCurve],
    epsilons: &[f64],
    deltas: &[u32],
) -> Result<SensitivityReport, MetricsError> {
    if curves.len() < 2 {
        return Err(MetricsError::InvalidParameter(format!(
            "sensitivity scan needs at least 2 curves, got {}",
            curves.len()
        )));
    }
    if epsilons.is_empty() || deltas.is_empty() {
        return Err(MetricsError::InvalidParameter(
            "empty epsilon or delta range".into(),
        ));
    }
    let names: Vec<String> = curves.iter().map(|c| c.label().to_string()).collect();

    let mut orders = Vec::new();
    for &epsilon in epsilons {
        let rsc_values: Vec<Option<f64>> = curves
            .iter()
            .map(|c| rsc(c, epsilon).ok().map(|r| r.rsc))
            .collect();
        let rsc_order = rank(&names, &rsc_values);
        for &delta in deltas {
            let rss_values: Vec<Option<f64>> = curves
                .iter()
                .map(|c| rss(c, delta).ok().and_then(|r| r.rss))
                .collect();
            orders.push((
                (epsilon, delta),
                rsc_order.clone(),
                rank(&names, &rss_values),
            ));
        }
    }

    let (base_setting, base_rsc, base_rss) = orders[0].clone();
    let mut flips = Vec::new();
    for (setting, rsc_order, rss_order) in &orders[1..] {
        for flip in flips_between("rsc", &names, &base_rsc, rsc_order, base_setting, *setting)
            .into_iter()
            .chain(flips_between(
                "rss",
                &names,
                &base_rss,
                rss_order,
                base_setting,
                *setting,
            ))
        {
            let seen = flips.iter().any(|f: &RankFlip| {
                f.metric == flip.metric && f.higher == flip.higher && f.lower == flip.lower
            });
            if !seen {
                flips.push(flip);
            }
        }
    }

    let stds: Vec<f64> = curves
        .iter()
        .map(|c| population_std(&c.points().iter().map(|p| p.f1).collect::<Vec<_>>()))
        .collect();
    let f1_std = F1Spread {
        mean_std: stds.iter().sum::<f64>() / stds.len() as f64,
        max_std: stds.iter().copied().fold(0.0, f64::max),
    };

    let named = |order: &[usize]| order.iter().map(|&i| names[i].clone()).collect();
    Ok(SensitivityReport {
        epsilons: epsilons.to_vec(),
        deltas: deltas.to_vec(),
        settings: orders
            .iter()
            .map(|((epsilon, delta), rsc_order, rss_order)| SettingRanking {
                epsilon: *epsilon,
                delta: *delta,
                rsc_ranking: named(rsc_order),
                rss_ranking: named(rss_order),
            })
            .collect(),
        invariant: flips.is_empty(),
        flips,
        f1_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::curve::CurveLabel;

    fn curve(reader: &str, pairs: &[(u32, f64)]) -> PerformanceCurve {
        let label = CurveLabel {
            dataset: "d".into(),
            retriever: "r".into(),
            reader: reader.into(),
            condition: "top_k".into(),
            variant: "standard".into(),
        };
        PerformanceCurve::from_pairs(label, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn well_separated_curves_are_invariant() {
        let curves = vec![
            curve("a", &[(1, 10.0), (2, 30.0), (5, 50.0), (10, 60.0)]),
            curve("b", &[(1, 10.0), (2, 10.2), (5, 10.1), (10, 10.0)]),
        ];
        let report = sensitivity_scan(
            &curves,
            &DEFAULT_SENSITIVITY_EPSILONS,
            &DEFAULT_SENSITIVITY_DELTAS,
        )
        .unwrap();
        assert!(report.invariant);
        assert_eq!(report.settings.len(), 6);
        assert_eq!(report.settings[0].rsc_ranking[0], "d/r/a/top_k/standard");
        assert_eq!(report.settings[0].rss_ranking[0], "d/r/b/top_k/standard");
    }

    #[test]
    fn boundary_gain_flips_rsc_order() {
        let curves = vec![
            curve("edge", &[(1, 50.0), (2, 50.6), (5, 50.6)]),
            curve("steady", &[(1, 10.0), (2, 11.0), (5, 11.0)]),
        ];
        let report = sensitivity_scan(&curves, &DEFAULT_SENSITIVITY_EPSILONS, &[5]).unwrap();
        assert!(!report.invariant);
        let flip = &report.flips[0];
        assert_eq!(flip.metric, "rsc");
        assert_eq!(flip.higher, "d/r/edge/top_k/standard");
        assert_eq!(flip.lower, "d/r/steady/top_k/standard");
        assert_eq!(flip.setting.0, 0.7);
    }

    #[test]
    fn std_summary() {
        let curves = vec![
            curve("a", &[(1, 0.0), (2, 2.0)]),
            curve("b", &[(1, 5.0), (2, 5.0)]),
        ];
        let report = sensitivity_scan(&curves, &[0.5], &[5]).unwrap();
        assert_eq!(report.f1_std.max_std, 1.0);
        assert_eq!(report.f1_std.mean_std, 0.5);
    }

    #[test]
    fn needs_two_curves() {
        assert!(sensitivity_scan(&[curve("a", &[(1, 1.0), (2, 2.0)])], &[0.5], &[5]).is_err());
    }
}
