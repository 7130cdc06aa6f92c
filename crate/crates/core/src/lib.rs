//! Building blocks for fusing discontinuous-NER predictions.
//!
//! - [`model`]: sentences, fragments, entities and their canonical identity
//! - [`bio`]: BIO encoding for the continuous subset
//! - [`uniform`]: the per-sentence uniform record and its JSON-lines codec
//! - [`formats`]: gold and model-specific prediction readers
//! - [`voting`]: hard majority voting
//! - [`arbiter`]: LLM arbitration with prompt construction, response guards
//!   and voting fallback
//! - [`evaluation`]: exact-match scoring, corpus statistics, rank analysis and
//!   report rendering

pub mod arbiter;
pub mod bio;
pub mod evaluation;
pub mod formats;
pub mod model;
pub mod uniform;
pub mod voting;

pub use bio::{bio_decode, bio_encode, BioTag};
pub use model::{
    canonical_key, entity_text, fragments_from_indices, indices_from_fragments, Entity, Fragment,
    ModelError, PredictionSet, Sentence,
};
pub use uniform::{UniformEntity, UniformRecord};
pub use voting::{tally, vote, vote_record, Tally, TieRule, VoteConfig, VoteError};
