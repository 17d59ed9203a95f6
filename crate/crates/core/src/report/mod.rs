//! curves.csv interchange, SVG plots and the markdown summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

mod summary;
mod svg;

pub use summary::{render_summary, SummaryParams};
pub use svg::render_plot;

use crate::metrics::{CurveLabel, CurvePoint, MetricsError, PerformanceCurve};
use crate::reader::ConditionTag;

pub const CURVES_HEADER: [&str; 7] = [
    "dataset",
    "retriever",
    "reader",
    "condition",
    "variant",
    "k",
    "f1",
];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("nothing to report: {0}")]
    NothingToReport(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Curves plus closed-book baselines, as stored in curves.csv. Baselines are
/// the `no_context` rows, written with k = 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveTable {
    pub curves: Vec<PerformanceCurve>,
    pub no_context: BTreeMap<CurveLabel, f64>,
}

impl CurveTable {
    pub fn is_empty(&self) -> bool {
        self.curves.is_empty() && self.no_context.is_empty()
    }

    /// Closed-book F1 for the cell a curve belongs to.
    pub fn baseline_for(&self, label: &CurveLabel) -> Option<f64> {
        let key = CurveLabel {
            condition: ConditionTag::NoContext.as_str().to_owned(),
            ..label.clone()
        };
        self.no_context.get(&key).copied()
    }

    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(CurveLabel, u32, f64)> = self
            .no_context
            .iter()
            .map(|(label, f1)| (label.clone(), 0, *f1))
            .collect();
        for curve in &self.curves {
            rows.extend(
                curve
                    .points()
                    .iter()
                    .map(|p| (curve.label().clone(), p.k, p.f1)),
            );
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(CURVES_HEADER).expect("write to memory");
        for (label, k, f1) in rows {
            out.write_record([
                label.dataset.as_str(),
                &label.retriever,
                &label.reader,
                &label.condition,
                &label.variant,
                &k.to_string(),
                &format!("{f1:.4}"),
            ])
            .expect("write to memory");
        }
        String::from_utf8(out.into_inner().expect("flush to memory")).expect("utf-8 fields")
    }

    pub fn write(&self, path: &Path) -> Result<(), ReportError> {
        fs::write(path, self.to_csv()).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ReportError> {
        let err = |line: u64, message: String| ReportError::Csv {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
        if headers.iter().ne(CURVES_HEADER) {
            return Err(err(
                1,
                format!("expected header {}", CURVES_HEADER.join(",")),
            ));
        }
        let mut points: BTreeMap<CurveLabel, BTreeMap<u32, (f64, u64)>> = BTreeMap::new();
        let mut no_context = BTreeMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let row: Row = record
                .deserialize(Some(&headers))
                .map_err(|e| err(line, e.to_string()))?;
            if !(0.0..=100.0).contains(&row.f1) {
                return Err(err(line, format!("f1 {} outside [0, 100]", row.f1)));
            }
            let label = CurveLabel {
                dataset: row.dataset,
                retriever: row.retriever,
                reader: row.reader,
                condition: row.condition,
                variant: row.variant,
            };
            if label.condition == ConditionTag::NoContext.as_str() {
                if row.k != 0 {
                    return Err(err(line, "no_context rows must have k = 0".into()));
                }
                if no_context.insert(label, row.f1).is_some() {
                    return Err(err(line, "duplicate no_context row".into()));
                }
                continue;
            }
            if row.k == 0 {
                return Err(err(
                    line,
                    format!("k must be >= 1 for condition {}", label.condition),
                ));
            }
            let cell = points.entry(label).or_default();
            if let Some((_, first)) = cell.insert(row.k, (row.f1, line)) {
                return Err(err(
                    line,
                    format!("duplicate point k={} (first on line {first})", row.k),
                ));
            }
        }
        let curves = points
            .into_iter()
            .map(|(label, pts)| {
                let pts = pts
                    .into_iter()
                    .map(|(k, (f1, _))| CurvePoint { k, f1 })
                    .collect();
                PerformanceCurve::new(label, pts)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { curves, no_context })
    }

    pub fn read(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }
}

#[derive(Deserialize)]
struct Row {
    dataset: String,
    retriever: String,
    reader: String,
    condition: String,
    variant: String,
    k: u32,
    f1: f64,
}

/// Report files keyed by file name, ready to be written.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub files: BTreeMap<String, String>,
}

/// File-name-safe slug: ASCII alphanumerics, `-` and `_`; everything else
/// becomes `-`.
pub fn slug(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

/// Builds the summary and one plot per (dataset, retriever) over the
/// `top_k` curves. Fails when there is nothing to plot.
pub fn build_report(
    table: &CurveTable,
    params: &SummaryParams,
) -> Result<ReportFiles, ReportError> {
    if table.curves.is_empty() {
        return Err(ReportError::NothingToReport("no curves".into()));
    }
    let mut groups: BTreeMap<(String, String), Vec<&PerformanceCurve>> = BTreeMap::new();
    for curve in &table.curves {
        if curve.label().condition == ConditionTag::TopK.as_str() {
            let l = curve.label();
            groups
                .entry((l.dataset.clone(), l.retriever.clone()))
                .or_default()
                .push(curve);
        }
    }
    let mut files = BTreeMap::new();
    let mut plots = Vec::new();
    for ((dataset, retriever), curves) in &groups {
        let name = format!("{}__{}.svg", slug(dataset), slug(retriever));
        files.insert(
            name.clone(),
            render_plot(&format!("{dataset} / {retriever}"), curves),
        );
        plots.push((dataset.clone(), retriever.clone(), name));
    }
    files.insert("summary.md".into(), render_summary(table, params, &plots));
    Ok(ReportFiles { files })
}
