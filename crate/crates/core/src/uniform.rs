//! The per-sentence uniform record shared by every ensembling path.
//!
//! One JSON object per line:
//!
//! ```text
//! {"text": "stiff upper leg , quad area .", "sentence": ["stiff", ...],
//!  "entity_list": [{"text": "stiff quad area", "index": [0, 4, 5], "label": "ADE"}],
//!  "record_id": "doc-1:0"}
//! ```
//!
//! Unknown fields survive a read/write cycle unchanged.

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::formats::FormatError;
use crate::model::{entity_text, Entity, ModelError, Sentence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformEntity {
    pub text: String,
    pub index: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl UniformEntity {
    pub fn from_entity(sentence: &Sentence, entity: &Entity) -> Result<Self, ModelError> {
        let index = entity.indices();
        Ok(Self {
            text: entity_text(sentence, &index)?,
            index,
            label: Some(entity.label().to_string()),
            extra: Map::new(),
        })
    }

    pub fn to_entity(&self, default_label: &str) -> Result<Entity, ModelError> {
        let label = self.label.as_deref().unwrap_or(default_label);
        Entity::from_indices(label, &self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformRecord {
    pub text: String,
    pub sentence: Vec<String>,
    pub entity_list: Vec<UniformEntity>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub record_id: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl UniformRecord {
    /// Builds a record from a sentence and its entities, sorted by position.
    pub fn from_entities<'a>(
        record_id: impl Into<String>,
        sentence: &Sentence,
        entities: impl IntoIterator<Item = &'a Entity>,
    ) -> Result<Self, ModelError> {
        let mut sorted: Vec<&Entity> = entities.into_iter().collect();
        sorted.sort_by(|a, b| {
            a.indices()
                .cmp(&b.indices())
                .then_with(|| a.label().cmp(b.label()))
        });
        let entity_list = sorted
            .into_iter()
            .map(|e| UniformEntity::from_entity(sentence, e))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            text: sentence.text().to_string(),
            sentence: sentence.tokens().to_vec(),
            entity_list,
            record_id: record_id.into(),
            extra: Map::new(),
        })
    }

    /// Checks index ranges and that every entity text equals its joined tokens.
    pub fn validate(&self) -> Result<(), FormatError> {
        let fail = |message: String| FormatError::Consistency {
            record_id: self.record_id.clone(),
            message,
        };
        for item in &self.entity_list {
            if item.index.is_empty() {
                return Err(fail(format!("entity {:?} has an empty index", item.text)));
            }
            if item.index.windows(2).any(|w| w[0] >= w[1]) {
                return Err(fail(format!(
                    "entity {:?} index {:?} is not strictly increasing",
                    item.text, item.index
                )));
            }
            let joined = join_tokens(&self.sentence, &item.index).ok_or_else(|| {
                fail(format!(
                    "entity {:?} index {:?} out of range for {} tokens",
                    item.text,
                    item.index,
                    self.sentence.len()
                ))
            })?;
            if joined != item.text {
                return Err(fail(format!(
                    "entity text {:?} does not match tokens {:?}",
                    item.text, joined
                )));
            }
        }
        Ok(())
    }

    pub fn to_sentence(&self) -> Result<Sentence, ModelError> {
        Sentence::align(self.text.clone(), self.sentence.clone())
    }

    pub fn entities(&self, default_label: &str) -> Result<BTreeSet<Entity>, ModelError> {
        self.entity_list
            .iter()
            .map(|e| e.to_entity(default_label))
            .collect()
    }

    /// Same record with no entities.
    pub fn without_entities(&self) -> Self {
        Self {
            entity_list: Vec::new(),
            ..self.clone()
        }
    }
}

fn join_tokens(tokens: &[String], index: &[usize]) -> Option<String> {
    let parts: Option<Vec<&str>> = index
        .iter()
        .map(|&i| tokens.get(i).map(String::as_str))
        .collect();
    parts.map(|p| p.join(" "))
}

/// JSON formatter emitting `": "` and `", "` separators on a single line.
#[derive(Debug, Default, Clone, Copy)]
pub struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b": ")
    }
}

/// Serializes any value on one line with [`SpacedFormatter`].
pub fn to_line<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SpacedFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_uniform<W: Write>(records: &[UniformRecord], mut sink: W) -> Result<(), FormatError> {
    for record in records {
        record.validate()?;
        let line = to_line(record).map_err(|e| FormatError::Json {
            line: 0,
            record_id: Some(record.record_id.clone()),
            message: e.to_string(),
        })?;
        sink.write_all(line.as_bytes())?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_uniform<R: BufRead>(stream: R) -> Result<Vec<UniformRecord>, FormatError> {
    let mut records = Vec::new();
    for (i, line) in stream.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: UniformRecord = serde_json::from_str(&line).map_err(|e| FormatError::Json {
            line: i + 1,
            record_id: None,
            message: e.to_string(),
        })?;
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIFORM_EXAMPLE: &str = r#"{"text": "stiff upper leg , quad area .", "sentence": ["stiff", "upper", "leg", ",", "quad", "area", "."], "entity_list": [{"text": "stiff upper leg", "index": [0, 1, 2]}, {"text": "stiff quad area", "index": [0, 4, 5]}]}"#;

    #[test]
    fn example_record_round_trips_byte_identically() {
        let records = read_uniform(UNIFORM_EXAMPLE.as_bytes()).unwrap();
        assert_eq!(records.len(), 1);
        let mut out = Vec::new();
        write_uniform(&records, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            format!("{UNIFORM_EXAMPLE}\n")
        );
    }

    #[test]
    fn empty_entity_list_serializes_as_empty_array() {
        let s = Sentence::from_tokens(["No", "effects", "."]).unwrap();
        let rec = UniformRecord::from_entities("d:0", &s, []).unwrap();
        let line = to_line(&rec).unwrap();
        assert!(line.contains(r#""entity_list": []"#), "{line}");
    }

    #[test]
    fn mismatched_text_is_a_consistency_error() {
        let bad = UNIFORM_EXAMPLE.replace("\"stiff quad area\"", "\"stiff quad areas\"");
        assert!(matches!(
            read_uniform(bad.as_bytes()),
            Err(FormatError::Consistency { .. })
        ));
    }

    #[test]
    fn unknown_fields_are_preserved() {
        let line = r#"{"text": "a b", "sentence": ["a", "b"], "entity_list": [{"text": "b", "index": [1], "label": "ADE", "score": 0.5}], "record_id": "x:0", "source": {"model": "toe"}}"#;
        let records = read_uniform(line.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_uniform(&records, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().trim_end(), line);
    }

    #[test]
    fn from_entities_orders_by_position() {
        let s = Sentence::from_tokens(["stiff", "upper", "leg", ",", "quad", "area", "."]).unwrap();
        let a = Entity::from_indices("ADE", &[0, 4, 5]).unwrap();
        let b = Entity::from_indices("ADE", &[0, 1, 2]).unwrap();
        let rec = UniformRecord::from_entities("d:1", &s, [&a, &b]).unwrap();
        assert_eq!(rec.entity_list[0].text, "stiff upper leg");
        assert_eq!(rec.entity_list[1].text, "stiff quad area");
    }
}
