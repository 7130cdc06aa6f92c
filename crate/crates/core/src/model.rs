//! Sentences, fragments and (possibly discontinuous) entities.
//!
//! Every position in this crate is a 0-based token index into a [`Sentence`].
//! An [`Entity`] is a label plus one or more [`Fragment`]s; fragments are kept
//! sorted, disjoint and separated by at least one token, so two entities are
//! equal exactly when their labels and token-index sets are equal.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid indices: {0}")]
    InvalidIndices(String),
    #[error("invalid fragments: {0}")]
    InvalidFragments(String),
    #[error("token index {index} out of range for sentence of {len} tokens")]
    OutOfRange { index: usize, len: usize },
    #[error("empty token selection")]
    EmptySelection,
    #[error("entity label must be non-empty")]
    EmptyLabel,
    #[error("invalid sentence: {0}")]
    InvalidSentence(String),
    #[error("not representable in BIO: {0}")]
    NotRepresentable(String),
}

/// One contiguous, inclusive token range of an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fragment {
    start: usize,
    end: usize,
}

impl Fragment {
    pub fn new(start: usize, end: usize) -> Result<Self, ModelError> {
        if start > end {
            return Err(ModelError::InvalidFragments(format!(
                "fragment start {start} exceeds end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    /// Number of tokens covered.
    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

/// Splits a strictly increasing index list into maximal runs of consecutive
/// indices.
pub fn fragments_from_indices(indices: &[usize]) -> Result<Vec<Fragment>, ModelError> {
    let (&first, rest) = indices.split_first().ok_or(ModelError::EmptySelection)?;
    let mut fragments = Vec::new();
    let mut start = first;
    let mut prev = first;
    for &idx in rest {
        if idx <= prev {
            return Err(ModelError::InvalidIndices(format!(
                "indices must be strictly increasing, found {idx} after {prev}"
            )));
        }
        if idx != prev + 1 {
            fragments.push(Fragment { start, end: prev });
            start = idx;
        }
        prev = idx;
    }
    fragments.push(Fragment { start, end: prev });
    Ok(fragments)
}

/// Inverse of [`fragments_from_indices`]. Fragments must already be sorted,
/// disjoint and non-adjacent.
pub fn indices_from_fragments(fragments: &[Fragment]) -> Result<Vec<usize>, ModelError> {
    if fragments.is_empty() {
        return Err(ModelError::InvalidFragments("no fragments".into()));
    }
    check_fragment_order(fragments)?;
    Ok(fragments.iter().flat_map(Fragment::indices).collect())
}

fn check_fragment_order(fragments: &[Fragment]) -> Result<(), ModelError> {
    for pair in fragments.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b.start <= a.end {
            return Err(ModelError::InvalidFragments(format!(
                "fragments {a} and {b} overlap or are out of order"
            )));
        }
        if b.start == a.end + 1 {
            return Err(ModelError::InvalidFragments(format!(
                "fragments {a} and {b} are adjacent and must be merged"
            )));
        }
    }
    Ok(())
}

/// A labelled, possibly discontinuous entity.
///
/// Field order makes the derived `Ord` sort by label, then by fragments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Entity {
    label: String,
    fragments: Vec<Fragment>,
}

impl Entity {
    /// Builds an entity from fragments in any order. Overlapping or adjacent
    /// fragments are rejected.
    pub fn new(label: impl Into<String>, mut fragments: Vec<Fragment>) -> Result<Self, ModelError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(ModelError::EmptyLabel);
        }
        if fragments.is_empty() {
            return Err(ModelError::InvalidFragments("no fragments".into()));
        }
        fragments.sort();
        check_fragment_order(&fragments)?;
        Ok(Self { label, fragments })
    }

    /// Builds an entity from a strictly increasing token-index list.
    pub fn from_indices(label: impl Into<String>, indices: &[usize]) -> Result<Self, ModelError> {
        let fragments = fragments_from_indices(indices)?;
        Self::new(label, fragments)
    }

    /// Builds an entity from an arbitrary collection of token indices,
    /// merging duplicates and touching runs.
    pub fn from_index_set(
        label: impl Into<String>,
        indices: impl IntoIterator<Item = usize>,
    ) -> Result<Self, ModelError> {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        let sorted: Vec<usize> = set.into_iter().collect();
        Self::from_indices(label, &sorted)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn indices(&self) -> Vec<usize> {
        self.fragments.iter().flat_map(Fragment::indices).collect()
    }

    pub fn is_discontinuous(&self) -> bool {
        self.fragments.len() > 1
    }

    pub fn first_index(&self) -> usize {
        self.fragments[0].start
    }

    pub fn last_index(&self) -> usize {
        self.fragments[self.fragments.len() - 1].end
    }

    /// Checks that every index falls inside a sentence of `len` tokens.
    pub fn check_within(&self, len: usize) -> Result<(), ModelError> {
        let last = self.last_index();
        if last >= len {
            return Err(ModelError::OutOfRange { index: last, len });
        }
        Ok(())
    }

    /// Returns a copy carrying a different label.
    pub fn with_label(&self, label: impl Into<String>) -> Result<Self, ModelError> {
        Self::new(label, self.fragments.clone())
    }

    pub fn canonical_key(&self) -> String {
        canonical_key(self)
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},", self.label)?;
        for frag in &self.fragments {
            write!(f, "{frag}")?;
        }
        write!(f, ")")
    }
}

/// Deterministic identity string: `label@s-e,s-e,...`.
///
/// The fragment part only ever contains digits, `-` and `,`, so splitting at the
/// last `@` recovers the label; the key is injective over (label, index set).
pub fn canonical_key(entity: &Entity) -> String {
    let mut key = String::with_capacity(entity.label.len() + 8 * entity.fragments.len());
    key.push_str(&entity.label);
    key.push('@');
    for (i, frag) in entity.fragments.iter().enumerate() {
        if i > 0 {
            key.push(',');
        }
        key.push_str(&frag.start.to_string());
        key.push('-');
        key.push_str(&frag.end.to_string());
    }
    key
}

/// A pre-tokenized sentence with inclusive character spans per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    text: String,
    tokens: Vec<String>,
    char_spans: Vec<(usize, usize)>,
}

impl Sentence {
    pub fn new(
        text: impl Into<String>,
        tokens: Vec<String>,
        char_spans: Vec<(usize, usize)>,
    ) -> Result<Self, ModelError> {
        let text = text.into();
        if tokens.len() != char_spans.len() {
            return Err(ModelError::InvalidSentence(format!(
                "{} tokens but {} character spans",
                tokens.len(),
                char_spans.len()
            )));
        }
        let chars: Vec<char> = text.chars().collect();
        let mut prev_end: Option<usize> = None;
        for (i, (token, &(start, end))) in tokens.iter().zip(&char_spans).enumerate() {
            if start > end || end >= chars.len() {
                return Err(ModelError::InvalidSentence(format!(
                    "token {i} has invalid span [{start},{end}]"
                )));
            }
            if prev_end.is_some_and(|p| start <= p) {
                return Err(ModelError::InvalidSentence(format!(
                    "token {i} span [{start},{end}] overlaps the previous token"
                )));
            }
            let slice: String = chars[start..=end].iter().collect();
            if &slice != token {
                return Err(ModelError::InvalidSentence(format!(
                    "token {i} is {token:?} but text at [{start},{end}] is {slice:?}"
                )));
            }
            prev_end = Some(end);
        }
        Ok(Self {
            text,
            tokens,
            char_spans,
        })
    }

    /// Joins tokens with single spaces to form the text.
    pub fn from_tokens<S: Into<String>>(
        tokens: impl IntoIterator<Item = S>,
    ) -> Result<Self, ModelError> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut spans = Vec::with_capacity(tokens.len());
        let mut offset = 0;
        for (i, token) in tokens.iter().enumerate() {
            let n = token.chars().count();
            if n == 0 {
                return Err(ModelError::InvalidSentence(format!("token {i} is empty")));
            }
            if token.chars().any(char::is_whitespace) {
                return Err(ModelError::InvalidSentence(format!(
                    "token {i} ({token:?}) contains whitespace"
                )));
            }
            spans.push((offset, offset + n - 1));
            offset += n + 1;
        }
        let text = tokens.join(" ");
        Ok(Self {
            text,
            tokens,
            char_spans: spans,
        })
    }

    /// Locates each token, in order, inside `text`.
    pub fn align(text: impl Into<String>, tokens: Vec<String>) -> Result<Self, ModelError> {
        let text = text.into();
        let chars: Vec<char> = text.chars().collect();
        let mut spans = Vec::with_capacity(tokens.len());
        let mut cursor = 0;
        for (i, token) in tokens.iter().enumerate() {
            let needle: Vec<char> = token.chars().collect();
            if needle.is_empty() {
                return Err(ModelError::InvalidSentence(format!("token {i} is empty")));
            }
            let found = (cursor..chars.len())
                .find(|&s| chars[s..].starts_with(&needle))
                .ok_or_else(|| {
                    ModelError::InvalidSentence(format!("token {i} ({token:?}) not found in text"))
                })?;
            spans.push((found, found + needle.len() - 1));
            cursor = found + needle.len();
        }
        Ok(Self {
            text,
            tokens,
            char_spans: spans,
        })
    }

    /// Cuts `text` into tokens at the given inclusive character spans.
    pub fn from_char_spans(
        text: impl Into<String>,
        char_spans: Vec<(usize, usize)>,
    ) -> Result<Self, ModelError> {
        let text = text.into();
        let chars: Vec<char> = text.chars().collect();
        let mut tokens = Vec::with_capacity(char_spans.len());
        for (i, &(start, end)) in char_spans.iter().enumerate() {
            if start > end || end >= chars.len() {
                return Err(ModelError::InvalidSentence(format!(
                    "span {i} [{start},{end}] is outside the text"
                )));
            }
            tokens.push(chars[start..=end].iter().collect());
        }
        Self::new(text, tokens, char_spans)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn char_spans(&self) -> &[(usize, usize)] {
        &self.char_spans
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn entity_text(&self, indices: &[usize]) -> Result<String, ModelError> {
        entity_text(self, indices)
    }
}

/// Space-joins the tokens at `indices`, keeping their original casing.
pub fn entity_text(sentence: &Sentence, indices: &[usize]) -> Result<String, ModelError> {
    if indices.is_empty() {
        return Err(ModelError::EmptySelection);
    }
    let len = sentence.len();
    let mut parts = Vec::with_capacity(indices.len());
    for &i in indices {
        let token = sentence
            .tokens
            .get(i)
            .ok_or(ModelError::OutOfRange { index: i, len })?;
        parts.push(token.as_str());
    }
    Ok(parts.join(" "))
}

/// One model's entities for one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    pub model_id: String,
    pub record_id: String,
    pub entities: BTreeSet<Entity>,
}

impl PredictionSet {
    pub fn new(model_id: impl Into<String>, record_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            record_id: record_id.into(),
            entities: BTreeSet::new(),
        }
    }

    pub fn with_entities(
        model_id: impl Into<String>,
        record_id: impl Into<String>,
        entities: impl IntoIterator<Item = Entity>,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            record_id: record_id.into(),
            entities: entities.into_iter().collect(),
        }
    }

    /// Inserts an entity; returns false if its canonical key was already present.
    pub fn insert(&mut self, entity: Entity) -> bool {
        self.entities.insert(entity)
    }
}
