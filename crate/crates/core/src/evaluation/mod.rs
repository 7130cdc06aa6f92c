//! Exact-match scoring, corpus statistics, rank analysis and report output.

mod metrics;
mod ranks;
mod report;
mod stats;

pub use metrics::{
    compute_prf, f1_from_pr, match_entities, prf_exact, round_half_up, score_records, Counts,
    MatchCounts, MetricsReport, Prf,
};
pub use ranks::{
    friedman_ranks, nemenyi_cd, nemenyi_q, rank_block, Alpha, RankReport, MAX_SYSTEMS,
};
pub use report::{
    check_f1_consistency, consistency_csv, improvements_against, improvements_csv, mark_columns,
    metrics_csv, metrics_table, rank_blocks, ranks_csv, read_reported_scores, render_report,
    ConsistencyCheck, ImprovementRow, Mark, MetricKind, ReportArtifacts, ReportedRow,
};
pub use stats::{corpus_stats, relative_improvement, relative_improvement_exact, CorpusStats};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("records differ between gold and predictions; missing in predictions: {missing_in_predictions:?}; missing in gold: {missing_in_gold:?}")]
    MisalignedRecords {
        missing_in_predictions: Vec<String>,
        missing_in_gold: Vec<String>,
    },
    #[error("{0}")]
    Domain(String),
    #[error("block {block} has no score for system {system:?}")]
    MissingCell { block: usize, system: String },
    #[error("system {0:?} appears more than once")]
    DuplicateSystem(String),
    #[error("invalid score table: {0}")]
    Shape(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("CSV: {0}")]
    Csv(String),
}
