//! Per-record arbitration with corrective re-prompt and voting fallback, and
//! a bounded worker pool over many records.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::client::{submit, ChatClient, RetryPolicy};
use super::prompt::{build_prompt, canonicalize_inputs, ArbitrationRequest, Prompt, PromptConfig};
use super::validate::{parse_and_validate_response, Rejection};
use super::ArbiterError;
use crate::model::{Entity, PredictionSet, Sentence};
use crate::uniform::to_line;
use crate::voting::{tally, vote, VoteConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArbiterSettings {
    pub vote: VoteConfig,
    pub prompt: PromptConfig,
    pub retry: RetryPolicy,
    pub strict_union: bool,
    pub default_label: String,
    /// Records in flight at once.
    pub concurrency: usize,
}

impl Default for ArbiterSettings {
    fn default() -> Self {
        Self {
            vote: VoteConfig::default(),
            prompt: PromptConfig::default(),
            retry: RetryPolicy::default(),
            strict_union: false,
            default_label: "ADE".into(),
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeSource {
    Arbitrated,
    FallbackVoting,
}

/// One round trip with the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt_hash: String,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub validation_report: Vec<Rejection>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArbitrationOutcome {
    pub record_id: String,
    pub entities: BTreeSet<Entity>,
    pub source: OutcomeSource,
    /// Last reply received, empty if none arrived.
    pub raw_response: String,
    pub validation_report: Vec<Rejection>,
    pub attempt_count: u32,
    pub exchanges: Vec<Exchange>,
}

/// Everything needed to arbitrate one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ArbitrationInput {
    pub record_id: String,
    pub sentence: Sentence,
    pub predictions: Vec<PredictionSet>,
}

enum Step {
    Accepted(BTreeSet<Entity>, Vec<Rejection>),
    Unparseable,
    Failed,
}

fn exchange(
    record_id: &str,
    prompt: &Prompt,
    request: &ArbitrationRequest,
    settings: &ArbiterSettings,
    union: &BTreeSet<Entity>,
    client: &dyn ChatClient,
    log: &mut Vec<Exchange>,
) -> Step {
    let started = Instant::now();
    let sent = submit(record_id, prompt, &settings.prompt, &settings.retry, client);
    let latency_ms = started.elapsed().as_millis() as u64;
    let mut entry = Exchange {
        prompt_hash: prompt.hash(),
        attempts: 0,
        raw_response: None,
        error: None,
        validation_report: Vec::new(),
        latency_ms,
    };
    let step = match sent {
        Err(e) => {
            entry.attempts = e.attempts();
            entry.error = Some(e.to_string());
            Step::Failed
        }
        Ok(reply) => {
            entry.attempts = reply.attempts;
            let parsed = parse_and_validate_response(
                &reply.text,
                &request.record,
                union,
                settings.strict_union,
                &settings.default_label,
            );
            entry.raw_response = Some(reply.text);
            match parsed {
                Ok((entities, report)) => {
                    entry.validation_report = report.clone();
                    Step::Accepted(entities, report)
                }
                Err(e) => {
                    entry.error = Some(e.to_string());
                    Step::Unparseable
                }
            }
        }
    };
    log.push(entry);
    step
}

/// Arbitrates one record. Transport failures, timeouts and two unreadable
/// replies in a row fall back to voting; only invalid inputs are errors.
pub fn arbitrate_record(
    input: &ArbitrationInput,
    settings: &ArbiterSettings,
    client: &dyn ChatClient,
) -> Result<ArbitrationOutcome, ArbiterError> {
    let tallies = tally(&input.predictions)?;
    let voted = vote(&tallies, &settings.vote, input.predictions.len());
    let union: BTreeSet<Entity> = tallies.into_iter().map(|t| t.entity).collect();

    let request = canonicalize_inputs(&ArbitrationRequest::new(
        &input.record_id,
        &input.sentence,
        &input.predictions,
    )?);
    let prompt = build_prompt(&request, &settings.prompt)?;

    let mut log = Vec::new();
    let mut step = exchange(
        &input.record_id,
        &prompt,
        &request,
        settings,
        &union,
        client,
        &mut log,
    );
    if matches!(step, Step::Unparseable) {
        step = exchange(
            &input.record_id,
            &prompt.with_correction(),
            &request,
            settings,
            &union,
            client,
            &mut log,
        );
    }

    let raw_response = log
        .iter()
        .rev()
        .find_map(|e| e.raw_response.clone())
        .unwrap_or_default();
    let attempt_count = log.iter().map(|e| e.attempts).sum();
    let (entities, source, validation_report) = match step {
        Step::Accepted(entities, report) => (entities, OutcomeSource::Arbitrated, report),
        Step::Unparseable | Step::Failed => (voted, OutcomeSource::FallbackVoting, Vec::new()),
    };
    Ok(ArbitrationOutcome {
        record_id: input.record_id.clone(),
        entities,
        source,
        raw_response,
        validation_report,
        attempt_count,
        exchanges: log,
    })
}

/// Arbitrates every input with at most `settings.concurrency` records in
/// flight. Outcomes come back in input order.
pub fn arbitrate_all(
    inputs: &[ArbitrationInput],
    settings: &ArbiterSettings,
    client: &dyn ChatClient,
) -> Result<Vec<ArbitrationOutcome>, ArbiterError> {
    let workers = settings.concurrency.max(1).min(inputs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ArbitrationOutcome, ArbiterError>>>> =
        inputs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(input) = inputs.get(i) else { break };
                let result = arbitrate_record(input, settings, client);
                *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .unwrap_or_else(|p| p.into_inner())
                .expect("every slot is filled by a worker")
        })
        .collect()
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    record_id: &'a str,
    source: OutcomeSource,
    exchange: usize,
    #[serde(flatten)]
    detail: &'a Exchange,
}

/// One JSON line per request sent, in record order.
pub fn write_transcript<W: Write>(
    outcomes: &[ArbitrationOutcome],
    mut sink: W,
) -> Result<(), ArbiterError> {
    for outcome in outcomes {
        for (i, detail) in outcome.exchanges.iter().enumerate() {
            let line = TranscriptLine {
                record_id: &outcome.record_id,
                source: outcome.source,
                exchange: i + 1,
                detail,
            };
            writeln!(sink, "{}", to_line(&line)?)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arbiter::mock::{MockClient, MockPolicy, MockReply};
    use crate::arbiter::validate::RejectReason;
    use std::collections::HashMap;

    fn ent(idx: &[usize]) -> Entity {
        Entity::from_indices("ADE", idx).unwrap()
    }

    fn input() -> ArbitrationInput {
        let sentence =
            Sentence::from_tokens(["Muscle", "pain", "and", "fatigue", "in", "shoulders", "."])
                .unwrap();
        let lists: [&[&[usize]]; 5] = [
            &[&[0, 1], &[3, 4, 5]],
            &[&[0, 1], &[3]],
            &[&[0, 1], &[3, 4, 5]],
            &[&[1]],
            &[&[0, 1], &[3, 4, 5], &[5]],
        ];
        let predictions = lists
            .iter()
            .enumerate()
            .map(|(i, ents)| {
                PredictionSet::with_entities(format!("m{i}"), "d:1", ents.iter().map(|e| ent(e)))
            })
            .collect();
        ArbitrationInput {
            record_id: "d:1".into(),
            sentence,
            predictions,
        }
    }

    fn fast() -> ArbiterSettings {
        ArbiterSettings {
            retry: RetryPolicy {
                base_delay_ms: 1,
                jitter: 0.0,
                ..RetryPolicy::default()
            },
            ..ArbiterSettings::default()
        }
    }

    #[test]
    fn majority_mock_matches_voting() {
        let out =
            arbitrate_record(&input(), &fast(), &MockClient::policy(MockPolicy::Majority)).unwrap();
        assert_eq!(out.source, OutcomeSource::Arbitrated);
        assert_eq!(
            out.entities,
            BTreeSet::from([ent(&[0, 1]), ent(&[3, 4, 5])])
        );
        assert_eq!(out.attempt_count, 1);
    }

    #[test]
    fn garbage_twice_falls_back() {
        let out = arbitrate_record(&input(), &fast(), &MockClient::always("sorry")).unwrap();
        assert_eq!(out.source, OutcomeSource::FallbackVoting);
        assert_eq!(
            out.entities,
            BTreeSet::from([ent(&[0, 1]), ent(&[3, 4, 5])])
        );
        assert_eq!(out.exchanges.len(), 2);
        assert_eq!(out.raw_response, "sorry");
    }

    #[test]
    fn correction_prompt_recovers() {
        let client = MockClient::scripted(HashMap::from([(
            "d:1".to_string(),
            vec![
                MockReply::Text("hmm".into()),
                MockReply::Text(r#"{"entity_list": [{"text": "pain", "index": [1]}]}"#.into()),
            ],
        )]));
        let out = arbitrate_record(&input(), &fast(), &client).unwrap();
        assert_eq!(out.source, OutcomeSource::Arbitrated);
        assert_eq!(out.entities, BTreeSet::from([ent(&[1])]));
        assert_ne!(out.exchanges[0].prompt_hash, out.exchanges[1].prompt_hash);
    }

    #[test]
    fn transport_failure_falls_back() {
        let client = MockClient::scripted(HashMap::from([(
            "*".to_string(),
            vec![MockReply::Error(
                crate::arbiter::client::ClientError::Timeout,
            )],
        )]));
        let out = arbitrate_record(&input(), &fast(), &client).unwrap();
        assert_eq!(out.source, OutcomeSource::FallbackVoting);
        assert_eq!(out.raw_response, "");
        assert_eq!(out.attempt_count, 1);
    }

    #[test]
    fn union_mock_with_strict_union() {
        let settings = ArbiterSettings {
            strict_union: true,
            ..fast()
        };
        let out =
            arbitrate_record(&input(), &settings, &MockClient::policy(MockPolicy::Union)).unwrap();
        let union: BTreeSet<Entity> = input()
            .predictions
            .iter()
            .flat_map(|p| p.entities.clone())
            .collect();
        assert_eq!(out.entities, union);
        assert!(out.validation_report.is_empty());
    }

    #[test]
    fn unknown_token_reported() {
        let client =
            MockClient::always(r#"{"entity_list": [{"text": "muscle ache", "index": [0, 1]}]}"#);
        let out = arbitrate_record(&input(), &fast(), &client).unwrap();
        assert_eq!(out.source, OutcomeSource::Arbitrated);
        assert!(out.entities.is_empty());
        assert_eq!(out.validation_report[0].reason, RejectReason::UnknownToken);
    }

    #[test]
    fn pool_preserves_order() {
        let inputs: Vec<ArbitrationInput> = (0..9)
            .map(|i| {
                let mut inp = input();
                inp.record_id = format!("d:{i}");
                for p in &mut inp.predictions {
                    p.record_id = inp.record_id.clone();
                }
                inp
            })
            .collect();
        let settings = ArbiterSettings {
            concurrency: 3,
            ..fast()
        };
        let outs = arbitrate_all(
            &inputs,
            &settings,
            &MockClient::policy(MockPolicy::Majority),
        )
        .unwrap();
        let ids: Vec<_> = outs.iter().map(|o| o.record_id.as_str()).collect();
        assert_eq!(
            ids,
            ["d:0", "d:1", "d:2", "d:3", "d:4", "d:5", "d:6", "d:7", "d:8"]
        );
        let mut buf = Vec::new();
        write_transcript(&outs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 9);
    }
}
