use std::collections::BTreeSet;

use super::FormatError;
use crate::model::{ModelError, Sentence};

/// Maps inclusive character spans onto the tokens they cover. Each span must
/// start at a token start and end at a token end.
pub fn char_span_to_token_indices(
    sentence: &Sentence,
    char_spans: &[(usize, usize)],
) -> Result<Vec<usize>, FormatError> {
    if char_spans.is_empty() {
        return Err(ModelError::EmptySelection.into());
    }
    let spans = sentence.char_spans();
    let mut covered = BTreeSet::new();
    for &(start, end) in char_spans {
        let misaligned = FormatError::Alignment { start, end };
        let first = spans
            .iter()
            .position(|&(s, _)| s == start)
            .ok_or(misaligned)?;
        let last = spans
            .iter()
            .position(|&(_, e)| e == end)
            .ok_or(FormatError::Alignment { start, end })?;
        if last < first {
            return Err(FormatError::Alignment { start, end });
        }
        covered.extend(first..=last);
    }
    Ok(covered.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_tokens() -> Sentence {
        Sentence::from_tokens(["stiff", "upper"]).unwrap()
    }

    #[test]
    fn single_token_lookup() {
        assert_eq!(
            char_span_to_token_indices(&two_tokens(), &[(6, 10)]).unwrap(),
            vec![1]
        );
        assert_eq!(
            char_span_to_token_indices(&two_tokens(), &[(0, 4)]).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn multi_token_span() {
        assert_eq!(
            char_span_to_token_indices(&two_tokens(), &[(0, 10)]).unwrap(),
            vec![0, 1]
        );
    }

    #[test]
    fn mid_token_boundary_fails() {
        assert!(matches!(
            char_span_to_token_indices(&two_tokens(), &[(2, 7)]),
            Err(FormatError::Alignment { start: 2, end: 7 })
        ));
        assert!(matches!(
            char_span_to_token_indices(&two_tokens(), &[(6, 4)]),
            Err(FormatError::Alignment { .. })
        ));
        assert!(char_span_to_token_indices(&two_tokens(), &[]).is_err());
    }
}
