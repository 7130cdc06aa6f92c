//! LLM arbitration: prompt construction, chat clients, response guards and
//! the voting fallback.

mod arbitrate;
mod client;
mod http;
mod mock;
mod prompt;
mod validate;

pub use arbitrate::{
    arbitrate_all, arbitrate_record, write_transcript, ArbiterSettings, ArbitrationInput,
    ArbitrationOutcome, Exchange, OutcomeSource,
};
pub use client::{
    submit, ChatClient, ChatRequest, ClientError, RateLimited, RetryPolicy, SubmitError, Submitted,
    TokenBucket,
};
pub use http::{extract_message_content, HttpChatClient, API_KEY_ENV};
pub use mock::{MockClient, MockPolicy, MockReply, WILDCARD};
pub use prompt::{
    build_prompt, canonicalize_inputs, extract_payload, ArbitrationRequest, CandidateList, Prompt,
    PromptConfig, CORRECTION_INSTRUCTION, DEFAULT_ANNOTATION_DESCRIPTION,
    DEFAULT_ORDER_INVARIANCE_CLAUSE, DEFAULT_SAMPLE_DESCRIPTION, DEFAULT_TASK_DESCRIPTION,
    DEFAULT_TOKEN_RESTRICTION_CLAUSE, INPUT_MARKER, OUTPUT_INSTRUCTION,
};
pub use validate::{extract_entity_list, parse_and_validate_response, RejectReason, Rejection};

use thiserror::Error;

use crate::formats::FormatError;
use crate::model::ModelError;
use crate::voting::VoteError;

#[derive(Debug, Error)]
pub enum ArbiterError {
    #[error("invalid arbiter configuration: {0}")]
    Config(String),
    #[error("environment variable {0} is not set")]
    MissingCredential(&'static str),
    #[error("no entity list found in response: {0:?}")]
    Unparseable(String),
    #[error("mock script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Vote(#[from] VoteError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
