//! Reading an arbitrator reply and checking every proposed entity against the
//! record it answers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ArbiterError;
use crate::model::{canonical_key, Entity};
use crate::uniform::UniformRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    UnknownToken,
    BadIndices,
    TextMismatch,
    NotInUnion,
    Unparseable,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::UnknownToken => "unknown_token",
            RejectReason::BadIndices => "bad_indices",
            RejectReason::TextMismatch => "text_mismatch",
            RejectReason::NotInUnion => "not_in_union",
            RejectReason::Unparseable => "unparseable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// The offending item as compact JSON.
    pub item: String,
    pub reason: RejectReason,
}

/// Finds the entity array in a reply: the whole text as JSON, then a fenced
/// code block, then the outermost `{...}`, then the outermost `[...]`. An
/// object must carry `entity_list`; a bare array is taken as the list.
pub fn extract_entity_list(raw: &str) -> Option<Vec<Value>> {
    let mut candidates: Vec<&str> = vec![raw.trim()];
    if let Some(block) = fenced_block(raw) {
        candidates.push(block);
    }
    for (open, close) in [('{', '}'), ('[', ']')] {
        if let (Some(a), Some(b)) = (raw.find(open), raw.rfind(close)) {
            if a < b {
                candidates.push(&raw[a..=b]);
            }
        }
    }
    candidates
        .into_iter()
        .find_map(|c| match serde_json::from_str::<Value>(c).ok()? {
            Value::Object(mut map) => match map.remove("entity_list")? {
                Value::Array(items) => Some(items),
                _ => None,
            },
            Value::Array(items) => Some(items),
            _ => None,
        })
}

fn fenced_block(raw: &str) -> Option<&str> {
    let start = raw.find("```")?;
    let rest = &raw[start + 3..];
    let body_start = rest.find('\n').map(|i| i + 1).unwrap_or(0);
    let rest = &rest[body_start..];
    let end = rest.find("```")?;
    Some(rest[..end].trim())
}

/// Parses a reply and keeps the entities that pass every guard. Per item, the
/// checks run in this order: every word of `text` must be a sentence token
/// (`unknown_token`); `index` must be non-empty, strictly increasing and in
/// range (`bad_indices`); `text` must equal the indexed tokens joined by
/// spaces (`text_mismatch`); with `strict_union`, the entity must be one of
/// the candidates (`not_in_union`). Items that are not objects of the
/// expected shape are `unparseable`. Survivors are deduplicated.
pub fn parse_and_validate_response(
    raw: &str,
    record: &UniformRecord,
    union: &BTreeSet<Entity>,
    strict_union: bool,
    default_label: &str,
) -> Result<(BTreeSet<Entity>, Vec<Rejection>), ArbiterError> {
    let items = extract_entity_list(raw).ok_or_else(|| ArbiterError::Unparseable(snippet(raw)))?;
    let vocabulary: BTreeSet<&str> = record.sentence.iter().map(String::as_str).collect();
    let mut accepted: BTreeMap<String, Entity> = BTreeMap::new();
    let mut rejections = Vec::new();
    for item in items {
        match check_item(
            &item,
            record,
            &vocabulary,
            union,
            strict_union,
            default_label,
        ) {
            Ok(entity) => {
                accepted.entry(canonical_key(&entity)).or_insert(entity);
            }
            Err(reason) => rejections.push(Rejection {
                item: item.to_string(),
                reason,
            }),
        }
    }
    Ok((accepted.into_values().collect(), rejections))
}

fn check_item(
    item: &Value,
    record: &UniformRecord,
    vocabulary: &BTreeSet<&str>,
    union: &BTreeSet<Entity>,
    strict_union: bool,
    default_label: &str,
) -> Result<Entity, RejectReason> {
    let obj = item.as_object().ok_or(RejectReason::Unparseable)?;
    let text = obj
        .get("text")
        .and_then(Value::as_str)
        .ok_or(RejectReason::Unparseable)?;
    let label = match obj.get("label") {
        None | Some(Value::Null) => default_label,
        Some(Value::String(s)) if !s.trim().is_empty() => s.as_str(),
        Some(_) => return Err(RejectReason::Unparseable),
    };
    if text.split_whitespace().any(|w| !vocabulary.contains(w)) {
        return Err(RejectReason::UnknownToken);
    }
    let index: Vec<usize> = obj
        .get("index")
        .and_then(Value::as_array)
        .ok_or(RejectReason::BadIndices)?
        .iter()
        .map(|v| v.as_u64().map(|n| n as usize))
        .collect::<Option<_>>()
        .ok_or(RejectReason::BadIndices)?;
    if index.is_empty()
        || index.windows(2).any(|w| w[0] >= w[1])
        || index.last().is_some_and(|&i| i >= record.sentence.len())
    {
        return Err(RejectReason::BadIndices);
    }
    let joined: Vec<&str> = index.iter().map(|&i| record.sentence[i].as_str()).collect();
    if joined.join(" ") != text {
        return Err(RejectReason::TextMismatch);
    }
    let entity = Entity::from_indices(label, &index).map_err(|_| RejectReason::BadIndices)?;
    if strict_union && !union.contains(&entity) {
        return Err(RejectReason::NotInUnion);
    }
    Ok(entity)
}

fn snippet(raw: &str) -> String {
    const MAX: usize = 200;
    match raw.char_indices().nth(MAX) {
        Some((cut, _)) => format!("{}...", &raw[..cut]),
        None => raw.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sentence;

    fn record(tokens: &[&str]) -> UniformRecord {
        let s = Sentence::from_tokens(tokens.iter().copied()).unwrap();
        UniformRecord::from_entities("r", &s, []).unwrap()
    }

    fn ent(idx: &[usize]) -> Entity {
        Entity::from_indices("ADE", idx).unwrap()
    }

    #[test]
    fn synonym_is_unknown_token() {
        let rec = record(&["My", "arms", "are", "redness", "."]);
        let raw =
            r#"{"entity_list": [{"text": "arms erythema", "index": [1, 3], "label": "ADE"}]}"#;
        let (ents, report) =
            parse_and_validate_response(raw, &rec, &BTreeSet::new(), false, "ADE").unwrap();
        assert!(ents.is_empty());
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].reason, RejectReason::UnknownToken);
    }

    #[test]
    fn echoed_record_accepted() {
        let rec = record(&["stiff", "upper", "leg", ",", "quad", "area", "."]);
        let raw = r#"{"entity_list": [{"text": "stiff upper leg", "index": [0, 1, 2]}, {"text": "stiff quad area", "index": [0, 4, 5]}]}"#;
        let (ents, report) =
            parse_and_validate_response(raw, &rec, &BTreeSet::new(), false, "ADE").unwrap();
        assert!(report.is_empty());
        assert_eq!(ents, BTreeSet::from([ent(&[0, 1, 2]), ent(&[0, 4, 5])]));
    }

    #[test]
    fn strict_union_rejects_new_entities() {
        let rec = record(&["a", "b", "c"]);
        let union = BTreeSet::from([ent(&[0])]);
        let raw = r#"[{"text": "a", "index": [0]}, {"text": "c", "index": [2]}]"#;
        let (ents, report) = parse_and_validate_response(raw, &rec, &union, true, "ADE").unwrap();
        assert_eq!(ents, BTreeSet::from([ent(&[0])]));
        assert_eq!(report[0].reason, RejectReason::NotInUnion);
        let (ents, _) = parse_and_validate_response(raw, &rec, &union, false, "ADE").unwrap();
        assert_eq!(ents.len(), 2);
    }

    #[test]
    fn index_and_text_guards() {
        let rec = record(&["a", "b", "c"]);
        let raw = r#"{"entity_list": [
            {"text": "b a", "index": [1, 0]},
            {"text": "c", "index": [3]},
            {"text": "a", "index": []},
            {"text": "a b", "index": [0, 2]},
            {"index": [0]},
            7
        ]}"#;
        let (ents, report) =
            parse_and_validate_response(raw, &rec, &BTreeSet::new(), false, "ADE").unwrap();
        assert!(ents.is_empty());
        let reasons: Vec<_> = report.iter().map(|r| r.reason).collect();
        assert_eq!(
            reasons,
            [
                RejectReason::BadIndices,
                RejectReason::BadIndices,
                RejectReason::BadIndices,
                RejectReason::TextMismatch,
                RejectReason::Unparseable,
                RejectReason::Unparseable,
            ]
        );
    }

    #[test]
    fn extraction_from_prose_and_fences() {
        let rec = record(&["a", "b"]);
        for raw in [
            "Here you go:\n```json\n{\"entity_list\": [{\"text\": \"b\", \"index\": [1]}]}\n```",
            "Answer: {\"entity_list\": [{\"text\": \"b\", \"index\": [1]}]} hope it helps",
            "[{\"text\": \"b\", \"index\": [1]}]",
        ] {
            let (ents, _) =
                parse_and_validate_response(raw, &rec, &BTreeSet::new(), false, "ADE").unwrap();
            assert_eq!(ents, BTreeSet::from([ent(&[1])]), "{raw}");
        }
        assert!(matches!(
            parse_and_validate_response("no idea", &rec, &BTreeSet::new(), false, "ADE"),
            Err(ArbiterError::Unparseable(_))
        ));
        assert!(parse_and_validate_response(
            "{\"answer\": 1}",
            &rec,
            &BTreeSet::new(),
            false,
            "ADE"
        )
        .is_err());
    }

    #[test]
    fn duplicates_collapse() {
        let rec = record(&["a", "b"]);
        let raw = r#"[{"text": "a", "index": [0]}, {"text": "a", "index": [0], "label": "ADE"}]"#;
        let (ents, report) =
            parse_and_validate_response(raw, &rec, &BTreeSet::new(), false, "ADE").unwrap();
        assert_eq!(ents.len(), 1);
        assert!(report.is_empty());
    }
}
