//! BIO sequence labelling for continuous entities.
//!
//! BIO can only express single-fragment, non-overlapping entities; anything
//! else is rejected by [`bio_encode`].

use std::fmt;
use std::str::FromStr;

use crate::model::{Entity, Fragment, ModelError, Sentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioTag {
    B,
    I,
    O,
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BioTag::B => "B",
            BioTag::I => "I",
            BioTag::O => "O",
        };
        f.write_str(s)
    }
}

impl FromStr for BioTag {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "B" => Ok(BioTag::B),
            "I" => Ok(BioTag::I),
            "O" => Ok(BioTag::O),
            other => Err(ModelError::InvalidIndices(format!(
                "unknown BIO tag {other:?}"
            ))),
        }
    }
}

pub fn bio_encode(sentence: &Sentence, entities: &[Entity]) -> Result<Vec<BioTag>, ModelError> {
    let mut tags = vec![BioTag::O; sentence.len()];
    for entity in entities {
        if entity.is_discontinuous() {
            return Err(ModelError::NotRepresentable(format!(
                "entity {entity} has {} fragments",
                entity.fragments().len()
            )));
        }
        entity.check_within(sentence.len())?;
        let frag = entity.fragments()[0];
        if frag.indices().any(|i| tags[i] != BioTag::O) {
            return Err(ModelError::NotRepresentable(format!(
                "entity {entity} overlaps another entity"
            )));
        }
        tags[frag.start()] = BioTag::B;
        for i in frag.start() + 1..=frag.end() {
            tags[i] = BioTag::I;
        }
    }
    Ok(tags)
}

/// Reads each maximal `B I*` run as one entity. A dangling `I` opens a new
/// entity as if it were `B`.
pub fn bio_decode(tags: &[BioTag], default_label: &str) -> Result<Vec<Entity>, ModelError> {
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            BioTag::B => {
                if let Some(start) = open.take() {
                    spans.push((start, i - 1));
                }
                open = Some(i);
            }
            BioTag::I => {
                if open.is_none() {
                    open = Some(i);
                }
            }
            BioTag::O => {
                if let Some(start) = open.take() {
                    spans.push((start, i - 1));
                }
            }
        }
    }
    if let Some(start) = open {
        spans.push((start, tags.len() - 1));
    }
    spans
        .into_iter()
        .map(|(s, e)| Entity::new(default_label, vec![Fragment::new(s, e)?]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use BioTag::*;

    fn aching_sentence() -> Sentence {
        Sentence::from_tokens(["I", "am", "having", "aching", "in", "legs", "."]).unwrap()
    }

    #[test]
    fn encode_single_entity() {
        let e = Entity::from_indices("ADE", &[3, 4, 5]).unwrap();
        assert_eq!(
            bio_encode(&aching_sentence(), &[e]).unwrap(),
            vec![O, O, O, B, I, I, O]
        );
    }

    #[test]
    fn encode_no_entities() {
        assert_eq!(bio_encode(&aching_sentence(), &[]).unwrap(), vec![O; 7]);
    }

    #[test]
    fn encode_rejects_discontinuous_and_overlap() {
        let s = aching_sentence();
        let disc = Entity::from_indices("ADE", &[0, 4, 5]).unwrap();
        assert!(matches!(
            bio_encode(&s, &[disc]),
            Err(ModelError::NotRepresentable(_))
        ));
        let a = Entity::from_indices("ADE", &[1, 2]).unwrap();
        let b = Entity::from_indices("ADE", &[2, 3]).unwrap();
        assert!(matches!(
            bio_encode(&s, &[a, b]),
            Err(ModelError::NotRepresentable(_))
        ));
    }

    #[test]
    fn decode_runs() {
        let got = bio_decode(&[O, O, O, B, I, I, O], "ADE").unwrap();
        assert_eq!(got, vec![Entity::from_indices("ADE", &[3, 4, 5]).unwrap()]);
        assert!(bio_decode(&[O, O, O], "ADE").unwrap().is_empty());
    }

    #[test]
    fn decode_repairs_dangling_inside() {
        let got = bio_decode(&[O, I, I, O], "ADE").unwrap();
        assert_eq!(got, vec![Entity::from_indices("ADE", &[1, 2]).unwrap()]);
    }

    #[test]
    fn decode_back_to_back_entities() {
        let got = bio_decode(&[B, B, I], "ADE").unwrap();
        assert_eq!(
            got,
            vec![
                Entity::from_indices("ADE", &[0]).unwrap(),
                Entity::from_indices("ADE", &[1, 2]).unwrap()
            ]
        );
    }

    #[test]
    fn tags_parse() {
        assert_eq!("B".parse::<BioTag>().unwrap(), B);
        assert!("X".parse::<BioTag>().is_err());
    }
}
