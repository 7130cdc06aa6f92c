//! Offline stand-ins for the live client: built-in answer policies and
//! record-keyed scripts.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::str::FromStr;
use std::sync::Mutex;

use serde::Deserialize;
use serde_json::{json, Value};

use super::client::{ChatClient, ChatRequest, ClientError};
use super::prompt::extract_payload;
use super::ArbiterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockPolicy {
    /// Entities proposed by a strict majority of the candidate lists.
    Majority,
    /// Every candidate entity.
    Union,
    /// The first candidate list as given.
    EchoFirst,
}

impl FromStr for MockPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "majority" => Ok(Self::Majority),
            "union" => Ok(Self::Union),
            "echo_first" => Ok(Self::EchoFirst),
            other => Err(format!("unknown mock policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    Text(String),
    Error(ClientError),
}

/// Record id used for replies that apply to every record without its own entry.
pub const WILDCARD: &str = "*";

#[derive(Deserialize)]
struct ScriptLine {
    record_id: String,
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

pub enum MockClient {
    Policy(MockPolicy),
    Scripted {
        replies: HashMap<String, Vec<MockReply>>,
        cursors: Mutex<HashMap<String, usize>>,
    },
}

impl MockClient {
    pub fn policy(policy: MockPolicy) -> Self {
        Self::Policy(policy)
    }

    pub fn scripted(replies: HashMap<String, Vec<MockReply>>) -> Self {
        Self::Scripted {
            replies,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    /// Same reply for every record.
    pub fn always(text: impl Into<String>) -> Self {
        Self::scripted(HashMap::from([(
            WILDCARD.to_string(),
            vec![MockReply::Text(text.into())],
        )]))
    }

    /// Reads a JSON-lines script. Each line is
    /// `{"record_id": ..., "response": "..."}` or
    /// `{"record_id": ..., "error": "rate_limit" | "server" | "timeout" | "transport"}`.
    /// Repeated lines for one record are replayed in order; the last one then
    /// repeats. `"*"` matches any record without its own lines.
    pub fn from_script<R: BufRead>(stream: R) -> Result<Self, ArbiterError> {
        let mut replies: HashMap<String, Vec<MockReply>> = HashMap::new();
        for (i, line) in stream.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| ArbiterError::Script {
                line: i + 1,
                message: msg,
            };
            let parsed: ScriptLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            let reply = match (parsed.response, parsed.error.as_deref()) {
                (Some(text), None) => MockReply::Text(text),
                (None, Some("rate_limit")) => MockReply::Error(ClientError::RateLimited),
                (None, Some("server")) => MockReply::Error(ClientError::Server(500)),
                (None, Some("timeout")) => MockReply::Error(ClientError::Timeout),
                (None, Some("transport")) => {
                    MockReply::Error(ClientError::Transport("scripted".into()))
                }
                (None, Some(other)) => {
                    return Err(bad(format!("unknown scripted error {other:?}")))
                }
                _ => return Err(bad("exactly one of response or error is required".into())),
            };
            replies.entry(parsed.record_id).or_default().push(reply);
        }
        Ok(Self::scripted(replies))
    }
}

impl ChatClient for MockClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        match self {
            MockClient::Policy(policy) => answer_with_policy(*policy, &request.user),
            MockClient::Scripted { replies, cursors } => {
                let key = if replies.contains_key(&request.record_id) {
                    request.record_id.as_str()
                } else {
                    WILDCARD
                };
                let queue = replies.get(key).filter(|q| !q.is_empty()).ok_or_else(|| {
                    ClientError::BadResponse(format!("no scripted reply for {}", request.record_id))
                })?;
                let step = {
                    let mut cursors = cursors.lock().unwrap_or_else(|p| p.into_inner());
                    let cursor = cursors.entry(request.record_id.clone()).or_insert(0);
                    let step = *cursor;
                    *cursor += 1;
                    step
                };
                match &queue[step.min(queue.len() - 1)] {
                    MockReply::Text(t) => Ok(t.clone()),
                    MockReply::Error(e) => Err(e.clone()),
                }
            }
        }
    }
}

fn answer_with_policy(policy: MockPolicy, user: &str) -> Result<String, ClientError> {
    let payload = extract_payload(user)
        .ok_or_else(|| ClientError::BadResponse("prompt carries no input payload".into()))?;
    let lists: Vec<&Vec<Value>> = payload
        .iter()
        .filter(|(k, _)| !matches!(k.as_str(), "text" | "sentence"))
        .filter_map(|(_, v)| v.as_array())
        .collect();

    let chosen: Vec<Value> = match policy {
        MockPolicy::EchoFirst => lists.first().map(|l| (*l).clone()).unwrap_or_default(),
        MockPolicy::Union | MockPolicy::Majority => {
            let mut support: BTreeMap<(Vec<u64>, String), (usize, Value)> = BTreeMap::new();
            for list in &lists {
                let mut seen = std::collections::BTreeSet::new();
                for item in list.iter() {
                    let index: Vec<u64> = item["index"]
                        .as_array()
                        .map(|a| a.iter().filter_map(Value::as_u64).collect())
                        .unwrap_or_default();
                    let label = item["label"].as_str().unwrap_or_default().to_string();
                    let key = (index, label);
                    if seen.insert(key.clone()) {
                        support.entry(key).or_insert((0, item.clone())).0 += 1;
                    }
                }
            }
            let needed = match policy {
                MockPolicy::Majority => lists.len() / 2 + 1,
                _ => 1,
            };
            support
                .into_values()
                .filter(|(count, _)| *count >= needed)
                .map(|(_, item)| item)
                .collect()
        }
    };
    Ok(json!({ "entity_list": chosen }).to_string())
}
