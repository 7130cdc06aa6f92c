//! Corpus statistics and relative improvement.

use serde::{Deserialize, Serialize};

use super::metrics::round_half_up;
use super::EvalError;
use crate::formats::GoldDocument;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub sentences: usize,
    pub tokens: usize,
    pub entities: usize,
    pub discontinuous_entities: usize,
}

impl CorpusStats {
    pub fn discontinuous_fraction(&self) -> f64 {
        if self.entities == 0 {
            0.0
        } else {
            self.discontinuous_entities as f64 / self.entities as f64
        }
    }
}

pub fn corpus_stats(documents: &[GoldDocument]) -> CorpusStats {
    let mut stats = CorpusStats {
        documents: documents.len(),
        ..CorpusStats::default()
    };
    for sentence in documents.iter().flat_map(|d| &d.sentences) {
        stats.sentences += 1;
        stats.tokens += sentence.sentence.len();
        stats.entities += sentence.entities.len();
        stats.discontinuous_entities += sentence
            .entities
            .iter()
            .filter(|e| e.is_discontinuous())
            .count();
    }
    stats
}

/// `100 * (ours - baseline) / baseline`, unrounded.
pub fn relative_improvement_exact(ours: f64, baseline: f64) -> Result<f64, EvalError> {
    if !(baseline > 0.0) || !ours.is_finite() || !baseline.is_finite() {
        return Err(EvalError::Domain(format!(
            "relative improvement needs a positive finite baseline, got {baseline}"
        )));
    }
    Ok(100.0 * (ours - baseline) / baseline)
}

/// Relative improvement in percent, rounded half-up to two decimals.
pub fn relative_improvement(ours: f64, baseline: f64) -> Result<f64, EvalError> {
    relative_improvement_exact(ours, baseline).map(|v| round_half_up(v, 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::parse_gold;

    #[test]
    fn deltas() {
        assert_eq!(relative_improvement(82.03, 81.59).unwrap(), 0.54);
        assert_eq!(relative_improvement(72.95, 72.49).unwrap(), 0.63);
        assert_eq!(relative_improvement(70.0, 70.0).unwrap(), 0.0);
        assert!(relative_improvement(1.0, 0.0).is_err());
        assert!(relative_improvement(1.0, -3.0).is_err());
    }

    #[test]
    fn counts() {
        let text = "#doc a\nstiff upper leg , quad area .\n0,2 ADE|0,0,4,5 ADE\n\nok .\n\n\n#doc b\nx y\n1,1\n";
        let docs = parse_gold(text.as_bytes(), "ADE").unwrap();
        assert_eq!(
            corpus_stats(&docs),
            CorpusStats {
                documents: 2,
                sentences: 3,
                tokens: 11,
                entities: 3,
                discontinuous_entities: 1,
            }
        );
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
        assert_eq!(CorpusStats::default().discontinuous_fraction(), 0.0);
    }
}
