//! Metric tables, rank data and consistency checks as CSV and plain text.

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::metrics::{f1_from_pr, MetricsReport};
use super::ranks::RankReport;
use super::stats::relative_improvement;
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mark {
    #[default]
    None,
    Best,
    Second,
}

impl Mark {
    pub fn as_str(self) -> &'static str {
        match self {
            Mark::None => "",
            Mark::Best => "best",
            Mark::Second => "second",
        }
    }

    fn decorate(self, cell: String) -> String {
        match self {
            Mark::None => cell,
            Mark::Best => format!("**{cell}**"),
            Mark::Second => format!("_{cell}_"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Precision,
    Recall,
    F1,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Precision, MetricKind::Recall, MetricKind::F1];

    pub fn of(self, m: &MetricsReport) -> f64 {
        match self {
            MetricKind::Precision => m.precision,
            MetricKind::Recall => m.recall,
            MetricKind::F1 => m.f1,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            MetricKind::Precision => "P",
            MetricKind::Recall => "R",
            MetricKind::F1 => "F1",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p" | "precision" => Ok(MetricKind::Precision),
            "r" | "recall" => Ok(MetricKind::Recall),
            "f1" | "f" => Ok(MetricKind::F1),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

fn datasets(metrics: &[MetricsReport]) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for m in metrics {
        if !out.contains(&m.dataset.as_str()) {
            out.push(&m.dataset);
        }
    }
    out
}

fn systems(metrics: &[MetricsReport]) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for m in metrics {
        if !out.contains(&m.system.as_str()) {
            out.push(&m.system);
        }
    }
    out
}

/// Best and second-best marks per (dataset, metric) column, aligned with
/// `metrics`. Ties share a mark; second best is the next distinct value.
pub fn mark_columns(metrics: &[MetricsReport]) -> Vec<[Mark; 3]> {
    let mut marks = vec![[Mark::None; 3]; metrics.len()];
    for dataset in datasets(metrics) {
        for (c, kind) in MetricKind::ALL.iter().enumerate() {
            let column: Vec<(usize, f64)> = metrics
                .iter()
                .enumerate()
                .filter(|(_, m)| m.dataset == dataset)
                .map(|(i, m)| (i, kind.of(m)))
                .collect();
            let best = column.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            let second = column
                .iter()
                .map(|c| c.1)
                .filter(|&v| v < best)
                .fold(f64::NEG_INFINITY, f64::max);
            for &(i, v) in &column {
                if v == best {
                    marks[i][c] = Mark::Best;
                } else if v == second {
                    marks[i][c] = Mark::Second;
                }
            }
        }
    }
    marks
}

fn csv_string(build: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>) -> String {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        build(&mut w).expect("writing CSV to memory cannot fail");
        w.flush().expect("flushing CSV to memory cannot fail");
    }
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

fn pct(v: f64) -> String {
    format!("{v:.2}")
}

/// Long format, one row per (system, dataset).
pub fn metrics_csv(metrics: &[MetricsReport]) -> String {
    let marks = mark_columns(metrics);
    csv_string(|w| {
        w.write_record([
            "system",
            "dataset",
            "precision",
            "recall",
            "f1",
            "precision_mark",
            "recall_mark",
            "f1_mark",
        ])?;
        for (m, mk) in metrics.iter().zip(&marks) {
            w.write_record([
                m.system.clone(),
                m.dataset.clone(),
                pct(m.precision),
                pct(m.recall),
                pct(m.f1),
                mk[0].as_str().into(),
                mk[1].as_str().into(),
                mk[2].as_str().into(),
            ])?;
        }
        Ok(())
    })
}

/// Aligned wide table: systems as rows, P/R/F1 per dataset as columns,
/// best in `**bold**`, second best in `_underscores_`.
pub fn metrics_table(metrics: &[MetricsReport]) -> String {
    let marks = mark_columns(metrics);
    let datasets = datasets(metrics);
    let systems = systems(metrics);
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["system".to_string()];
    for d in &datasets {
        for kind in MetricKind::ALL {
            header.push(format!("{d} {}", kind.short()));
        }
    }
    rows.push(header);
    for s in &systems {
        let mut row = vec![s.to_string()];
        for d in &datasets {
            let found = metrics
                .iter()
                .position(|m| m.system == *s && m.dataset == *d);
            for (c, kind) in MetricKind::ALL.iter().enumerate() {
                row.push(match found {
                    Some(i) => marks[i][c].decorate(pct(kind.of(&metrics[i]))),
                    None => "-".into(),
                });
            }
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (r, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if r == 0 {
            let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

/// One row per system with its average rank and the shared test values.
pub fn ranks_csv(ranks: Option<&RankReport>) -> String {
    csv_string(|w| {
        w.write_record([
            "system",
            "average_rank",
            "critical_difference",
            "alpha",
            "friedman_statistic",
            "blocks",
        ])?;
        if let Some(r) = ranks {
            for (s, rank) in r.systems.iter().zip(&r.average_ranks) {
                w.write_record([
                    s.clone(),
                    format!("{rank:.4}"),
                    r.critical_difference
                        .map(|cd| format!("{cd:.4}"))
                        .unwrap_or_default(),
                    r.alpha.map(|a| a.as_str().to_string()).unwrap_or_default(),
                    format!("{:.4}", r.friedman_statistic),
                    r.blocks.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportArtifacts {
    pub metrics_csv: String,
    pub metrics_table: String,
    pub ranks_csv: String,
}

pub fn render_report(metrics: &[MetricsReport], ranks: Option<&RankReport>) -> ReportArtifacts {
    ReportArtifacts {
        metrics_csv: metrics_csv(metrics),
        metrics_table: metrics_table(metrics),
        ranks_csv: ranks_csv(ranks),
    }
}

/// Score table for ranking: one block per (dataset, metric), one column per
/// system in first-appearance order. Absent pairs are `None`.
pub fn rank_blocks(
    metrics: &[MetricsReport],
    kinds: &[MetricKind],
) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let systems: Vec<String> = systems(metrics).into_iter().map(str::to_string).collect();
    let mut blocks = Vec::new();
    for d in datasets(metrics) {
        for kind in kinds {
            blocks.push(
                systems
                    .iter()
                    .map(|s| {
                        metrics
                            .iter()
                            .find(|m| &m.system == s && m.dataset == d)
                            .map(|m| kind.of(m))
                    })
                    .collect(),
            );
        }
    }
    (systems, blocks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub system: String,
    pub dataset: String,
    pub baseline: String,
    pub f1: f64,
    pub baseline_f1: f64,
    pub relative_improvement: f64,
}

/// F1 relative improvement of every other system over `baseline`, per dataset
/// the baseline was scored on.
pub fn improvements_against(
    metrics: &[MetricsReport],
    baseline: &str,
) -> Result<Vec<ImprovementRow>, EvalError> {
    if !metrics.iter().any(|m| m.system == baseline) {
        return Err(EvalError::Domain(format!(
            "baseline system {baseline:?} has no metrics"
        )));
    }
    let mut out = Vec::new();
    for m in metrics.iter().filter(|m| m.system != baseline) {
        if let Some(base) = metrics
            .iter()
            .find(|b| b.system == baseline && b.dataset == m.dataset)
        {
            out.push(ImprovementRow {
                system: m.system.clone(),
                dataset: m.dataset.clone(),
                baseline: baseline.to_string(),
                f1: m.f1,
                baseline_f1: base.f1,
                relative_improvement: relative_improvement(m.f1, base.f1)?,
            });
        }
    }
    Ok(out)
}

pub fn improvements_csv(rows: &[ImprovementRow]) -> String {
    csv_string(|w| {
        w.write_record([
            "system",
            "dataset",
            "baseline",
            "f1",
            "baseline_f1",
            "relative_improvement",
        ])?;
        for r in rows {
            w.write_record([
                r.system.clone(),
                r.dataset.clone(),
                r.baseline.clone(),
                pct(r.f1),
                pct(r.baseline_f1),
                pct(r.relative_improvement),
            ])?;
        }
        Ok(())
    })
}

/// A published (P, R, F1) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedRow {
    pub system: String,
    pub dataset: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Reads CSV with header `system,dataset,precision,recall,f1`.
pub fn read_reported_scores<R: Read>(source: R) -> Result<Vec<ReportedRow>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    reader
        .deserialize()
        .map(|row| row.map_err(|e| EvalError::Csv(e.to_string())))
        .collect()
}

impl From<&ReportedRow> for MetricsReport {
    fn from(r: &ReportedRow) -> Self {
        MetricsReport::from_values(
            r.system.clone(),
            r.dataset.clone(),
            r.precision,
            r.recall,
            r.f1,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub system: String,
    pub dataset: String,
    pub printed_f1: f64,
    pub computed_f1: f64,
    pub difference: f64,
    pub consistent: bool,
}

/// Recomputes F1 from each printed (P, R) and flags rows off by more than
/// `tolerance` percentage points.
pub fn check_f1_consistency(rows: &[ReportedRow], tolerance: f64) -> Vec<ConsistencyCheck> {
    rows.iter()
        .map(|r| {
            let computed = f1_from_pr(r.precision, r.recall);
            let difference = r.f1 - computed;
            ConsistencyCheck {
                system: r.system.clone(),
                dataset: r.dataset.clone(),
                printed_f1: r.f1,
                computed_f1: computed,
                difference,
                consistent: difference.abs() <= tolerance,
            }
        })
        .collect()
}

pub fn consistency_csv(checks: &[ConsistencyCheck]) -> String {
    csv_string(|w| {
        w.write_record([
            "system",
            "dataset",
            "printed_f1",
            "computed_f1",
            "difference",
            "consistent",
        ])?;
        for c in checks {
            w.write_record([
                c.system.clone(),
                c.dataset.clone(),
                pct(c.printed_f1),
                format!("{:.4}", c.computed_f1),
                format!("{:.4}", c.difference),
                c.consistent.to_string(),
            ])?;
        }
        Ok(())
    })
}
