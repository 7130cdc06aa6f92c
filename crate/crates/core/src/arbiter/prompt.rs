//! Prompt construction and order-independent canonicalization of candidates.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::ArbiterError;
use crate::model::{canonical_key, Entity, PredictionSet, Sentence};
use crate::uniform::{to_line, UniformEntity, UniformRecord};

pub const DEFAULT_TASK_DESCRIPTION: &str = "You are an NER expert in the medical field who can identify side effect symptom entities and want to select the best answer from the output of five discontinuous named entity recognition models in a Health data set.";

pub const DEFAULT_ANNOTATION_DESCRIPTION: &str = "An entity can be any adverse reaction or adverse event. These symptoms may be physical, such as nausea, vomiting, heart palpitations, headache, rash, redness, and swelling, or psychological, such as anxiety, delusions, or psychosis.";

pub const DEFAULT_SAMPLE_DESCRIPTION: &str = r#"The input is a JSON object holding the original "text", its tokenized "sentence", and one "entity_list_N" per recognition model. Every entity is {"text", "index", "label"}, where "index" lists 0-based positions in "sentence" and "text" is the tokens at those positions joined by single spaces. Example input: {"text": "stiff upper leg , quad area .", "sentence": ["stiff", "upper", "leg", ",", "quad", "area", "."], "entity_list_1": [{"text": "stiff upper leg", "index": [0, 1, 2], "label": "ADE"}, {"text": "stiff quad area", "index": [0, 4, 5], "label": "ADE"}], "entity_list_2": [{"text": "stiff upper leg", "index": [0, 1, 2], "label": "ADE"}]}. Example output: {"entity_list": [{"text": "stiff upper leg", "index": [0, 1, 2], "label": "ADE"}, {"text": "stiff quad area", "index": [0, 4, 5], "label": "ADE"}]}"#;

pub const DEFAULT_ORDER_INVARIANCE_CLAUSE: &str = r#"Act as an arbitrator between the "entity_list" candidates. Judge every candidate entity on its own merits: neither the order of the entity lists nor the order of entities inside a list may influence your decision."#;

pub const DEFAULT_TOKEN_RESTRICTION_CLAUSE: &str = r#"Select entities only from the tokens of the "sentence" list, copied exactly as written; never substitute synonyms or words that are not in "sentence". Give "index" in strictly increasing order, and make "text" the tokens at those positions joined by single spaces."#;

pub const OUTPUT_INSTRUCTION: &str = r#"Respond with only a JSON object of the form {"entity_list": [{"text": "...", "index": [...], "label": "..."}]}. Respond with {"entity_list": []} if no entity applies."#;

pub const CORRECTION_INSTRUCTION: &str = r#"Your previous answer could not be read. Reply again with only the JSON object {"entity_list": [...]} and no other text."#;

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub task_description: String,
    pub annotation_description: String,
    pub sample_description: String,
    pub order_invariance_clause: String,
    pub token_restriction_clause: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    #[serde(rename = "request_timeout_secs", with = "secs")]
    pub request_timeout: Duration,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            task_description: DEFAULT_TASK_DESCRIPTION.into(),
            annotation_description: DEFAULT_ANNOTATION_DESCRIPTION.into(),
            sample_description: DEFAULT_SAMPLE_DESCRIPTION.into(),
            order_invariance_clause: DEFAULT_ORDER_INVARIANCE_CLAUSE.into(),
            token_restriction_clause: DEFAULT_TOKEN_RESTRICTION_CLAUSE.into(),
            model_name: "gpt-4".into(),
            temperature: 0.0,
            max_retries: 3,
            request_timeout: Duration::from_secs(60),
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), ArbiterError> {
        let sections = [
            ("task_description", &self.task_description),
            ("annotation_description", &self.annotation_description),
            ("sample_description", &self.sample_description),
            ("order_invariance_clause", &self.order_invariance_clause),
            ("token_restriction_clause", &self.token_restriction_clause),
            ("model_name", &self.model_name),
        ];
        for (name, text) in sections {
            if text.trim().is_empty() {
                return Err(ArbiterError::Config(format!("{name} must not be empty")));
            }
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ArbiterError::Config(format!(
                "temperature must be a non-negative number, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// One model's candidates as shown to the arbitrator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateList {
    pub name: String,
    pub entities: Vec<Entity>,
}

impl CandidateList {
    fn keys(&self) -> Vec<String> {
        self.entities.iter().map(canonical_key).collect()
    }

    /// SHA-256 over the newline-joined canonical keys, hex encoded.
    pub fn content_hash(&self) -> String {
        let joined = self.keys().join("\n");
        hex::encode(Sha256::digest(joined.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArbitrationRequest {
    /// The record without gold entities.
    pub record: UniformRecord,
    pub candidates: Vec<CandidateList>,
    pub canonicalized: bool,
}

impl ArbitrationRequest {
    pub fn new(
        record_id: &str,
        sentence: &Sentence,
        predictions: &[PredictionSet],
    ) -> Result<Self, ArbiterError> {
        let record = UniformRecord::from_entities(record_id, sentence, [])?;
        let candidates = predictions
            .iter()
            .map(|p| CandidateList {
                name: p.model_id.clone(),
                entities: p.entities.iter().cloned().collect(),
            })
            .collect();
        Ok(Self {
            record,
            candidates,
            canonicalized: false,
        })
    }

    /// The JSON object embedded in the user message.
    pub fn payload(&self) -> Result<Value, ArbiterError> {
        let sentence = self.record.to_sentence()?;
        let mut obj = Map::new();
        obj.insert("text".into(), Value::String(self.record.text.clone()));
        obj.insert(
            "sentence".into(),
            serde_json::to_value(&self.record.sentence)?,
        );
        for list in &self.candidates {
            let items = list
                .entities
                .iter()
                .map(|e| UniformEntity::from_entity(&sentence, e))
                .collect::<Result<Vec<_>, _>>()?;
            obj.insert(list.name.clone(), serde_json::to_value(items)?);
        }
        Ok(Value::Object(obj))
    }
}

/// Sorts every list by canonical key, orders the lists by content hash and
/// renames them `entity_list_1..n`, so the result is independent of the
/// order in which models were supplied.
pub fn canonicalize_inputs(request: &ArbitrationRequest) -> ArbitrationRequest {
    let mut lists: Vec<(String, Vec<String>, Vec<Entity>)> = request
        .candidates
        .iter()
        .map(|c| {
            let mut keyed: Vec<(String, Entity)> = c
                .entities
                .iter()
                .map(|e| (canonical_key(e), e.clone()))
                .collect();
            keyed.sort_by(|a, b| a.0.cmp(&b.0));
            keyed.dedup_by(|a, b| a.0 == b.0);
            let list = CandidateList {
                name: String::new(),
                entities: keyed.iter().map(|(_, e)| e.clone()).collect(),
            };
            let keys = keyed.into_iter().map(|(k, _)| k).collect();
            (list.content_hash(), keys, list.entities)
        })
        .collect();
    lists.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let candidates = lists
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, entities))| CandidateList {
            name: format!("entity_list_{}", i + 1),
            entities,
        })
        .collect();
    ArbitrationRequest {
        record: request.record.clone(),
        candidates,
        canonicalized: true,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    /// SHA-256 of system and user parts, hex encoded.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.system.as_bytes());
        hasher.update([0u8]);
        hasher.update(self.user.as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Concatenation as a single document, system part first.
    pub fn full_text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }

    pub fn with_correction(&self) -> Prompt {
        Prompt {
            system: self.system.clone(),
            user: format!("{}\n\n{}", self.user, CORRECTION_INSTRUCTION),
        }
    }
}

/// Marker line that precedes the JSON payload in the user message.
pub const INPUT_MARKER: &str = "Input:";

pub fn build_prompt(
    request: &ArbitrationRequest,
    config: &PromptConfig,
) -> Result<Prompt, ArbiterError> {
    let system = [
        config.task_description.trim(),
        config.annotation_description.trim(),
        config.sample_description.trim(),
        config.order_invariance_clause.trim(),
        config.token_restriction_clause.trim(),
    ]
    .join("\n\n");
    let payload = to_line(&request.payload()?)?;
    let user = format!("{INPUT_MARKER}\n{payload}\n\n{OUTPUT_INSTRUCTION}");
    Ok(Prompt { system, user })
}

/// Recovers the JSON payload from a user message built by [`build_prompt`].
pub fn extract_payload(user: &str) -> Option<Map<String, Value>> {
    let mut lines = user.lines();
    lines.find(|l| l.trim() == INPUT_MARKER)?;
    let line = lines.next()?;
    match serde_json::from_str(line).ok()? {
        Value::Object(map) => Some(map),
        _ => None,
    }
}
