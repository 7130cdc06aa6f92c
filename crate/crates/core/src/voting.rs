//! Hard majority voting over per-model prediction sets.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Entity, PredictionSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VoteError {
    #[error("prediction sets mix record ids {0:?} and {1:?}")]
    MixedRecords(String, String),
    #[error("model {0:?} appears more than once")]
    DuplicateModel(String),
    #[error("vote threshold must be at least 1")]
    ZeroThreshold,
    #[error("vote threshold {threshold} exceeds the {models} participating models")]
    ThresholdAboveModels { threshold: usize, models: usize },
}

/// What to do with entities supported by exactly half of the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    Exclude,
    Include,
}

impl FromStr for TieRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exclude" => Ok(Self::Exclude),
            "include" => Ok(Self::Include),
            other => Err(format!("unknown tie rule {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VoteConfig {
    /// Minimum number of supporting models. `None` means strict majority.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
    #[serde(default)]
    pub tie_rule: TieRule,
}

impl VoteConfig {
    pub fn with_threshold(threshold: usize) -> Result<Self, VoteError> {
        if threshold == 0 {
            return Err(VoteError::ZeroThreshold);
        }
        Ok(Self {
            threshold: Some(threshold),
            tie_rule: TieRule::Exclude,
        })
    }

    /// Threshold applied for `model_count` models: the configured value, or
    /// ⌈(m+1)/2⌉.
    pub fn threshold_for(&self, model_count: usize) -> usize {
        self.threshold.unwrap_or(model_count / 2 + 1).max(1)
    }

    pub fn accepts(&self, count: usize, model_count: usize) -> bool {
        if count >= self.threshold_for(model_count) {
            return true;
        }
        self.tie_rule == TieRule::Include && model_count > 0 && 2 * count == model_count
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    pub entity: Entity,
    /// Supporting model ids, sorted.
    pub models: Vec<String>,
}

impl Tally {
    pub fn count(&self) -> usize {
        self.models.len()
    }
}

/// Counts, per distinct entity, how many models predicted it. The result is
/// ordered by entity.
pub fn tally(predictions: &[PredictionSet]) -> Result<Vec<Tally>, VoteError> {
    let mut models = BTreeSet::new();
    if let Some(first) = predictions.first() {
        for p in predictions {
            if p.record_id != first.record_id {
                return Err(VoteError::MixedRecords(
                    first.record_id.clone(),
                    p.record_id.clone(),
                ));
            }
            if !models.insert(p.model_id.as_str()) {
                return Err(VoteError::DuplicateModel(p.model_id.clone()));
            }
        }
    }
    let mut support: BTreeMap<&Entity, BTreeSet<&str>> = BTreeMap::new();
    for p in predictions {
        for entity in &p.entities {
            support
                .entry(entity)
                .or_default()
                .insert(p.model_id.as_str());
        }
    }
    Ok(support
        .into_iter()
        .map(|(entity, models)| Tally {
            entity: entity.clone(),
            models: models.into_iter().map(str::to_string).collect(),
        })
        .collect())
}

/// Keeps the entities whose support reaches the threshold.
pub fn vote(tallies: &[Tally], config: &VoteConfig, model_count: usize) -> BTreeSet<Entity> {
    tallies
        .iter()
        .filter(|t| config.accepts(t.count(), model_count))
        .map(|t| t.entity.clone())
        .collect()
}

/// `tally` then `vote`, with the model count taken from the input length.
/// An explicit threshold must lie in `1..=m`.
pub fn vote_record(
    predictions: &[PredictionSet],
    config: &VoteConfig,
) -> Result<BTreeSet<Entity>, VoteError> {
    match config.threshold {
        Some(0) => return Err(VoteError::ZeroThreshold),
        Some(t) if !predictions.is_empty() && t > predictions.len() => {
            return Err(VoteError::ThresholdAboveModels {
                threshold: t,
                models: predictions.len(),
            })
        }
        _ => {}
    }
    let tallies = tally(predictions)?;
    Ok(vote(&tallies, config, predictions.len()))
}
