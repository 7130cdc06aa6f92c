//! Readers for gold annotations, the five model prediction schemas, and the
//! uniform record format.

mod align;
mod gold;
mod graph;
mod predictions;

pub use align::char_span_to_token_indices;
pub use gold::{parse_gold, GoldDocument, GoldSentence};
pub use graph::{resolve_fragment_graph, FragmentGraph, ResolveMode};
pub use predictions::{parse_model_output, ModelFormatKind, ParseOptions};

pub use crate::uniform::{read_uniform, write_uniform};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}{}: {message}", record_id.as_ref().map(|r| format!(" (record {r})")).unwrap_or_default())]
    Json {
        line: usize,
        record_id: Option<String>,
        message: String,
    },
    #[error("record {record_id}: {message}")]
    Record { record_id: String, message: String },
    #[error("record {record_id}: inconsistent entity: {message}")]
    Consistency { record_id: String, message: String },
    #[error("character span [{start},{end}] does not align with token boundaries")]
    Alignment { start: usize, end: usize },
    #[error("connected fragments carry conflicting labels {0:?} and {1:?}")]
    LabelConflict(String, String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("invalid fragment graph: {0}")]
    Graph(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FormatError {
    /// Attaches a record id to errors that do not carry one yet.
    pub(crate) fn in_record(self, record_id: &str, line: usize) -> Self {
        match self {
            FormatError::Json {
                line: 0,
                record_id: None,
                message,
            } => FormatError::Json {
                line,
                record_id: Some(record_id.to_string()),
                message,
            },
            FormatError::Parse { .. }
            | FormatError::Json { .. }
            | FormatError::Record { .. }
            | FormatError::Consistency { .. }
            | FormatError::Io(_) => self,
            other => FormatError::Record {
                record_id: record_id.to_string(),
                message: format!("line {line}: {other}"),
            },
        }
    }
}
