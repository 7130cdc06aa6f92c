//! Gold annotation reader.
//!
//! Grammar, one record per block:
//!
//! ```text
//! #doc cadec-0001            (optional; starts a new document)
//! stiff upper leg , quad area .
//! 0,2 ADE|0,0,4,5 ADE
//!
//! ```
//!
//! The first line holds space-separated tokens. The second line holds zero or
//! more annotations joined by `|`; each is a flat list of inclusive, 0-based
//! `start,end` pairs followed by an optional label. Blocks are separated by a
//! blank line. Record ids are `<doc_id>:<sentence ordinal>`.

use std::collections::BTreeSet;
use std::io::BufRead;

use super::FormatError;
use crate::model::{Entity, Sentence};

pub const IMPLICIT_DOC_ID: &str = "doc0";

#[derive(Debug, Clone, PartialEq)]
pub struct GoldSentence {
    pub record_id: String,
    pub sentence: Sentence,
    pub entities: BTreeSet<Entity>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldDocument {
    pub doc_id: String,
    pub sentences: Vec<GoldSentence>,
}

pub fn record_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}:{ordinal}")
}

enum State {
    ExpectSentence,
    ExpectAnnotation(Sentence, usize),
    ExpectSeparator,
}

pub fn parse_gold<R: BufRead>(
    stream: R,
    default_label: &str,
) -> Result<Vec<GoldDocument>, FormatError> {
    let mut docs: Vec<GoldDocument> = Vec::new();
    let mut state = State::ExpectSentence;

    let current = |docs: &mut Vec<GoldDocument>| -> usize {
        if docs.is_empty() {
            docs.push(GoldDocument {
                doc_id: IMPLICIT_DOC_ID.to_string(),
                sentences: Vec::new(),
            });
        }
        docs.len() - 1
    };

    for (i, line) in stream.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        state = match state {
            State::ExpectSentence => {
                if line.trim().is_empty() {
                    State::ExpectSentence
                } else if let Some(id) = line.strip_prefix("#doc") {
                    let id = id.trim();
                    if id.is_empty() {
                        return Err(parse_err(lineno, "document header without an id"));
                    }
                    if docs.iter().any(|d| d.doc_id == id) {
                        return Err(parse_err(lineno, format!("duplicate document id {id:?}")));
                    }
                    docs.push(GoldDocument {
                        doc_id: id.to_string(),
                        sentences: Vec::new(),
                    });
                    State::ExpectSentence
                } else {
                    let sentence = Sentence::from_tokens(line.split_whitespace())
                        .map_err(|e| parse_err(lineno, e.to_string()))?;
                    State::ExpectAnnotation(sentence, lineno)
                }
            }
            State::ExpectAnnotation(sentence, _) => {
                let entities = parse_annotation_line(line, sentence.len(), default_label)
                    .map_err(|msg| parse_err(lineno, msg))?;
                push_sentence(&mut docs, current, sentence, entities);
                State::ExpectSeparator
            }
            State::ExpectSeparator => {
                if !line.trim().is_empty() {
                    return Err(parse_err(lineno, "expected a blank line between records"));
                }
                State::ExpectSentence
            }
        };
    }
    if let State::ExpectAnnotation(_, lineno) = state {
        return Err(parse_err(lineno, "sentence has no annotation line"));
    }
    Ok(docs)
}

fn push_sentence(
    docs: &mut Vec<GoldDocument>,
    current: impl Fn(&mut Vec<GoldDocument>) -> usize,
    sentence: Sentence,
    entities: BTreeSet<Entity>,
) {
    let idx = current(docs);
    let doc = &mut docs[idx];
    let id = record_id(&doc.doc_id, doc.sentences.len());
    doc.sentences.push(GoldSentence {
        record_id: id,
        sentence,
        entities,
    });
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_annotation_line(
    line: &str,
    sentence_len: usize,
    default_label: &str,
) -> Result<BTreeSet<Entity>, String> {
    let mut entities = BTreeSet::new();
    if line.trim().is_empty() {
        return Ok(entities);
    }
    for segment in line.split('|') {
        let mut parts = segment.split_whitespace();
        let numbers = parts
            .next()
            .ok_or_else(|| format!("empty annotation segment in {line:?}"))?;
        let label = parts.next().unwrap_or(default_label);
        if let Some(extra) = parts.next() {
            return Err(format!(
                "unexpected {extra:?} in segment {segment:?}; annotations are joined by '|'"
            ));
        }
        let values = numbers
            .split(',')
            .map(|n| {
                n.parse::<usize>()
                    .map_err(|_| format!("bad index {n:?} in {segment:?}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() % 2 != 0 {
            return Err(format!("odd number of indices in {segment:?}"));
        }
        let mut indices = BTreeSet::new();
        for pair in values.chunks(2) {
            let (start, end) = (pair[0], pair[1]);
            if start > end {
                return Err(format!("span {start},{end} has start after end"));
            }
            if end >= sentence_len {
                return Err(format!(
                    "span {start},{end} out of range for {sentence_len} tokens"
                ));
            }
            for idx in start..=end {
                if !indices.insert(idx) {
                    return Err(format!("overlapping spans in {segment:?}"));
                }
            }
        }
        let entity = Entity::from_index_set(label, indices).map_err(|e| e.to_string())?;
        entities.insert(entity);
    }
    Ok(entities)
}
