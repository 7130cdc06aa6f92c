//! Live chat-completions client over HTTP.

use serde_json::{json, Value};

use super::client::{ChatClient, ChatRequest, ClientError};
use super::ArbiterError;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "DNER_ARBITER_API_KEY";

pub struct HttpChatClient {
    endpoint: String,
    api_key: String,
}

impl HttpChatClient {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
        }
    }

    /// Reads the API key from [`API_KEY_ENV`].
    pub fn from_env(endpoint: impl Into<String>) -> Result<Self, ArbiterError> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(endpoint, key)),
            _ => Err(ArbiterError::MissingCredential(API_KEY_ENV)),
        }
    }

    pub fn request_body(request: &ChatRequest) -> Value {
        json!({
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
        })
    }
}

/// Pulls `choices[0].message.content` out of a completion response body.
pub fn extract_message_content(body: &str) -> Result<String, ClientError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| ClientError::BadResponse(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ClientError::BadResponse("no choices[0].message.content".into()))
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(request.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        let response = agent
            .post(&self.endpoint)
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(Self::request_body(request));
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(ClientError::Timeout),
            Err(e) => return Err(ClientError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let body = match response.body_mut().read_to_string() {
            Ok(b) => b,
            Err(ureq::Error::Timeout(_)) => return Err(ClientError::Timeout),
            Err(e) => return Err(ClientError::Transport(e.to_string())),
        };
        match status {
            200..=299 => extract_message_content(&body),
            429 => Err(ClientError::RateLimited),
            500..=599 => Err(ClientError::Server(status)),
            _ => Err(ClientError::Rejected { status, body }),
        }
    }
}
