//! Readers for the five model prediction schemas (one JSON record per line).
//!
//! | kind                | record shape                                                                |
//! |---------------------|-----------------------------------------------------------------------------|
//! | `transition_based`  | `{record_id, entities: [{type, spans: [[s, e], ...]}]}`                      |
//! | `span_relation`     | `{record_id, ner: [[s, e, type], ...], relations: [[i, j], ...]}`            |
//! | `char_span_list`    | `{record_id, text, word2char_span: [[cs, ce], ...], entity_list: [{type, char_spans}]}` |
//! | `index_list`        | `{record_id, entities: [{type, index: [i, ...]}]}`                           |
//! | `index_list_tagged` | as `index_list`, plus an optional `tag_scheme` string                        |
//!
//! Token positions are 0-based and inclusive; `type` may be omitted, in which
//! case the corpus default label is used. Extra fields are ignored.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::graph::{resolve_fragment_graph, FragmentGraph, ResolveMode};
use super::{char_span_to_token_indices, FormatError};
use crate::model::{Entity, Fragment, PredictionSet, Sentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFormatKind {
    TransitionBased,
    SpanRelation,
    CharSpanList,
    IndexList,
    IndexListTagged,
}

impl ModelFormatKind {
    pub const ALL: [ModelFormatKind; 5] = [
        Self::TransitionBased,
        Self::SpanRelation,
        Self::CharSpanList,
        Self::IndexList,
        Self::IndexListTagged,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TransitionBased => "transition_based",
            Self::SpanRelation => "span_relation",
            Self::CharSpanList => "char_span_list",
            Self::IndexList => "index_list",
            Self::IndexListTagged => "index_list_tagged",
        }
    }
}

impl fmt::Display for ModelFormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFormatKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown model format {s:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub default_label: String,
    pub resolve_mode: ResolveMode,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            default_label: "ADE".to_string(),
            resolve_mode: ResolveMode::Components,
        }
    }
}

#[derive(Deserialize)]
struct TransitionEntity {
    #[serde(rename = "type", default)]
    label: Option<String>,
    spans: Vec<[usize; 2]>,
}

#[derive(Deserialize)]
struct TransitionRecord {
    entities: Vec<TransitionEntity>,
}

#[derive(Deserialize)]
struct SpanRelationRecord {
    ner: Vec<(usize, usize, String)>,
    #[serde(default)]
    relations: Vec<[usize; 2]>,
}

#[derive(Deserialize)]
struct CharSpanEntity {
    #[serde(rename = "type", default)]
    label: Option<String>,
    char_spans: Vec<[usize; 2]>,
}

#[derive(Deserialize)]
struct CharSpanRecord {
    text: String,
    word2char_span: Vec<[usize; 2]>,
    entity_list: Vec<CharSpanEntity>,
}

#[derive(Deserialize)]
struct IndexEntity {
    #[serde(rename = "type", default)]
    label: Option<String>,
    index: Vec<usize>,
}

#[derive(Deserialize)]
struct IndexRecord {
    entities: Vec<IndexEntity>,
    #[serde(default)]
    tag_scheme: Option<Value>,
}

/// Parses one prediction file into per-record prediction sets, in file order.
/// Duplicate entities inside a record collapse to one.
pub fn parse_model_output<R: BufRead>(
    kind: ModelFormatKind,
    stream: R,
    model_id: &str,
    options: &ParseOptions,
) -> Result<Vec<PredictionSet>, FormatError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in stream.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| FormatError::Json {
            line: lineno,
            record_id: None,
            message: e.to_string(),
        })?;
        let record_id = match value.get("record_id") {
            Some(Value::String(id)) if !id.is_empty() => id.clone(),
            _ => {
                return Err(FormatError::Json {
                    line: lineno,
                    record_id: None,
                    message: format!("{kind} record is missing a string record_id"),
                })
            }
        };
        if !seen.insert(record_id.clone()) {
            return Err(FormatError::Record {
                record_id,
                message: format!("line {lineno}: duplicate record"),
            });
        }
        let entities =
            parse_record(kind, value, options).map_err(|e| e.in_record(&record_id, lineno))?;
        out.push(PredictionSet::with_entities(model_id, record_id, entities));
    }
    Ok(out)
}

fn typed<T: DeserializeOwned>(kind: ModelFormatKind, value: Value) -> Result<T, FormatError> {
    serde_json::from_value(value).map_err(|e| FormatError::Json {
        line: 0,
        record_id: None,
        message: format!("does not match the {kind} schema: {e}"),
    })
}

fn label_or<'a>(label: &'a Option<String>, options: &'a ParseOptions) -> &'a str {
    label.as_deref().unwrap_or(&options.default_label)
}

fn entity_from_spans(label: &str, spans: &[[usize; 2]]) -> Result<Entity, FormatError> {
    if spans.is_empty() {
        return Err(FormatError::Schema("entity without spans".into()));
    }
    let mut indices = Vec::new();
    for &[s, e] in spans {
        indices.extend(Fragment::new(s, e)?.indices());
    }
    Ok(Entity::from_index_set(label, indices)?)
}

fn parse_record(
    kind: ModelFormatKind,
    value: Value,
    options: &ParseOptions,
) -> Result<Vec<Entity>, FormatError> {
    match kind {
        ModelFormatKind::TransitionBased => {
            let rec: TransitionRecord = typed(kind, value)?;
            rec.entities
                .iter()
                .map(|e| entity_from_spans(label_or(&e.label, options), &e.spans))
                .collect()
        }
        ModelFormatKind::SpanRelation => {
            let rec: SpanRelationRecord = typed(kind, value)?;
            let nodes = rec
                .ner
                .into_iter()
                .map(|(s, e, label)| Ok((Fragment::new(s, e)?, label)))
                .collect::<Result<Vec<_>, FormatError>>()?;
            let edges: Vec<(usize, usize)> = rec.relations.iter().map(|&[a, b]| (a, b)).collect();
            let graph = FragmentGraph::new(nodes, &edges)?;
            resolve_fragment_graph(&graph, options.resolve_mode)
        }
        ModelFormatKind::CharSpanList => {
            let rec: CharSpanRecord = typed(kind, value)?;
            let spans = rec.word2char_span.iter().map(|&[s, e]| (s, e)).collect();
            let sentence = Sentence::from_char_spans(rec.text, spans)?;
            rec.entity_list
                .iter()
                .map(|e| {
                    let query: Vec<(usize, usize)> =
                        e.char_spans.iter().map(|&[s, e]| (s, e)).collect();
                    let indices = char_span_to_token_indices(&sentence, &query)?;
                    Ok(Entity::from_indices(label_or(&e.label, options), &indices)?)
                })
                .collect()
        }
        ModelFormatKind::IndexList | ModelFormatKind::IndexListTagged => {
            let rec: IndexRecord = typed(kind, value)?;
            if let Some(scheme) = &rec.tag_scheme {
                if kind == ModelFormatKind::IndexList {
                    return Err(FormatError::Schema(
                        "tag_scheme is only allowed for index_list_tagged".into(),
                    ));
                }
                if !matches!(scheme, Value::String(s) if !s.trim().is_empty()) {
                    return Err(FormatError::Schema(
                        "tag_scheme must be a non-empty string".into(),
                    ));
                }
            }
            rec.entities
                .iter()
                .map(|e| {
                    Ok(Entity::from_index_set(
                        label_or(&e.label, options),
                        e.index.iter().copied(),
                    )?)
                })
                .collect()
        }
    }
}
