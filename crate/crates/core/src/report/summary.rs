use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::CurveTable;
use crate::analysis::{
    classify_behavior, closed_book_verdict, Behavior, DEFAULT_BEHAVIOR_THRESHOLD,
};
use crate::metrics::{optimal_k, rsc, rss, PerformanceCurve, DEFAULT_DELTA, DEFAULT_EPSILON};
use crate::reader::ConditionTag;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryParams {
    pub epsilon: f64,
    pub delta: u32,
    pub behavior_threshold: f64,
    pub config_hash: Option<String>,
}

impl Default for SummaryParams {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            delta: DEFAULT_DELTA,
            behavior_threshold: DEFAULT_BEHAVIOR_THRESHOLD,
            config_hash: None,
        }
    }
}

fn reader_column(curve: &PerformanceCurve) -> String {
    let l = curve.label();
    if l.variant == "standard" {
        l.reader.clone()
    } else {
        format!("{} ({})", l.reader, l.variant)
    }
}

fn verdict_cell(table: &CurveTable, curve: &PerformanceCurve) -> String {
    let Some(baseline) = table.baseline_for(curve.label()) else {
        return "n/a".into();
    };
    match closed_book_verdict(curve, baseline, &curve.ks()) {
        Ok(v) => v.render(),
        Err(_) => "n/a".into(),
    }
}

fn fmt_opt(value: Option<f64>, digits: usize) -> String {
    value.map_or_else(|| "n/a".into(), |v| format!("{v:.digits$}"))
}

/// Markdown summary: per dataset, a closed-book comparison table (readers
/// by retrievers) and a table of depth metrics for every curve.
pub fn render_summary(
    table: &CurveTable,
    params: &SummaryParams,
    plots: &[(String, String, String)],
) -> String {
    let mut by_dataset: BTreeMap<&str, Vec<&PerformanceCurve>> = BTreeMap::new();
    for curve in &table.curves {
        by_dataset
            .entry(curve.label().dataset.as_str())
            .or_default()
            .push(curve);
    }

    let mut s = String::from("# Retrieval-depth report\n\n");
    if let Some(hash) = &params.config_hash {
        let _ = writeln!(s, "Config hash: `{hash}`\n");
    }
    let _ = writeln!(
        s,
        "epsilon = {}, delta = {}, behavior threshold = {} F1 points.\n",
        params.epsilon, params.delta, params.behavior_threshold
    );

    for (dataset, curves) in by_dataset {
        let _ = writeln!(s, "## {dataset}\n");

        let top_k: Vec<&PerformanceCurve> = curves
            .iter()
            .copied()
            .filter(|c| c.label().condition == ConditionTag::TopK.as_str())
            .collect();
        let retrievers: BTreeSet<&str> =
            top_k.iter().map(|c| c.label().retriever.as_str()).collect();
        let mut rows: BTreeMap<String, BTreeMap<&str, String>> = BTreeMap::new();
        for curve in &top_k {
            rows.entry(reader_column(curve))
                .or_default()
                .insert(curve.label().retriever.as_str(), verdict_cell(table, curve));
        }
        if !rows.is_empty() {
            s.push_str("### Retrieval vs. closed-book\n\n");
            s.push_str("✓: better at every k. ✗: never better. Otherwise the depths where retrieval wins.\n\n");
            let _ = writeln!(
                s,
                "| Reader | {} |",
                retrievers.iter().copied().collect::<Vec<_>>().join(" | ")
            );
            let _ = writeln!(s, "|---|{}", "---|".repeat(retrievers.len()));
            for (reader, cells) in &rows {
                let cells: Vec<&str> = retrievers
                    .iter()
                    .map(|r| cells.get(r).map_or("", String::as_str))
                    .collect();
                let _ = writeln!(s, "| {reader} | {} |", cells.join(" | "));
            }
            s.push('\n');
        }

        s.push_str("### Depth metrics\n\n");
        s.push_str("| Retriever | Reader | Condition | k* | F1(k*) | RSS | RSC | Behavior |\n");
        s.push_str("|---|---|---|---|---|---|---|---|\n");
        for curve in &curves {
            let l = curve.label();
            let k_star = optimal_k(curve);
            let peak = curve.f1_at(k_star);
            let stability = rss(curve, params.delta).ok().and_then(|r| r.rss);
            let scalability = rsc(curve, params.epsilon).ok().map(|r| r.rsc);
            let behavior = match classify_behavior(curve, params.behavior_threshold) {
                Ok(b) => match b.class {
                    Behavior::ImproveThenPlateau => "improve-then-plateau".to_owned(),
                    Behavior::PeakThenDecline => format!("peak-then-decline (-{:.2})", b.peak_drop),
                },
                Err(_) => "n/a".to_owned(),
            };
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                l.retriever,
                reader_column(curve),
                l.condition,
                k_star,
                fmt_opt(peak, 2),
                fmt_opt(stability, 4),
                fmt_opt(scalability, 2),
                behavior
            );
        }
        s.push('\n');

        for (d, retriever, file) in plots.iter().filter(|p| p.0 == dataset) {
            let _ = writeln!(s, "![{d} / {retriever}]({file})\n");
        }
    }
    s
}
