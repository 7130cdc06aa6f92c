//! Exact-match counting and precision/recall/F1.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::Entity;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Overall counts plus the same triple restricted to multi-fragment entities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    #[serde(flatten)]
    pub all: Counts,
    pub discontinuous: Counts,
}

impl MatchCounts {
    pub fn tp(&self) -> usize {
        self.all.tp
    }

    pub fn fp(&self) -> usize {
        self.all.fp
    }

    pub fn fn_(&self) -> usize {
        self.all.fn_
    }
}

impl Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            all: self.all + o.all,
            discontinuous: self.discontinuous + o.discontinuous,
        }
    }
}

impl AddAssign for MatchCounts {
    fn add_assign(&mut self, o: MatchCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = MatchCounts>>(iter: I) -> Self {
        iter.fold(MatchCounts::default(), Add::add)
    }
}

/// Exact match on label and token set. No partial credit.
pub fn match_entities(gold: &BTreeSet<Entity>, pred: &BTreeSet<Entity>) -> MatchCounts {
    let mut out = MatchCounts::default();
    for g in gold {
        let hit = pred.contains(g);
        if hit {
            out.all.tp += 1;
        } else {
            out.all.fn_ += 1;
        }
        if g.is_discontinuous() {
            if hit {
                out.discontinuous.tp += 1;
            } else {
                out.discontinuous.fn_ += 1;
            }
        }
    }
    for p in pred.difference(gold) {
        out.all.fp += 1;
        if p.is_discontinuous() {
            out.discontinuous.fp += 1;
        }
    }
    out
}

/// Rounds half away from zero to `decimals` places. A relative epsilon keeps
/// values such as 1.005 (stored as 1.00499...) on the intended side.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x.abs() * scale;
    let nudged = scaled + scaled.max(1.0) * 1e-12;
    x.signum() * (nudged + 0.5).floor() / scale
}

/// Harmonic mean of two percentages, 0 when both are 0.
pub fn f1_from_pr(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Unrounded percentages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn rounded(&self) -> Prf {
        Prf {
            precision: round_half_up(self.precision, 2),
            recall: round_half_up(self.recall, 2),
            f1: round_half_up(self.f1, 2),
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn prf_exact(counts: &Counts) -> Prf {
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    Prf {
        precision,
        recall,
        f1: f1_from_pr(precision, recall),
    }
}

/// Percentages rounded half-up to two decimals; every 0/0 ratio is 0.
pub fn compute_prf(counts: &Counts) -> Prf {
    prf_exact(counts).rounded()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub system: String,
    pub dataset: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when the report was built from published values.
    pub counts: Option<MatchCounts>,
}

impl MetricsReport {
    pub fn from_counts(
        system: impl Into<String>,
        dataset: impl Into<String>,
        counts: MatchCounts,
    ) -> Self {
        let prf = compute_prf(&counts.all);
        Self {
            system: system.into(),
            dataset: dataset.into(),
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            counts: Some(counts),
        }
    }

    /// Discontinuous-only view of a counted report.
    pub fn discontinuous(&self) -> Option<MetricsReport> {
        let counts = self.counts?;
        let prf = compute_prf(&counts.discontinuous);
        Some(Self {
            system: self.system.clone(),
            dataset: self.dataset.clone(),
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            counts: Some(counts),
        })
    }

    pub fn from_values(
        system: impl Into<String>,
        dataset: impl Into<String>,
        precision: f64,
        recall: f64,
        f1: f64,
    ) -> Self {
        Self {
            system: system.into(),
            dataset: dataset.into(),
            precision,
            recall,
            f1,
            counts: None,
        }
    }
}

/// Micro-aggregated counts of a system against gold, keyed by record id. Both
/// sides must cover the same records.
pub fn score_records(
    gold: &BTreeMap<String, BTreeSet<Entity>>,
    pred: &BTreeMap<String, BTreeSet<Entity>>,
) -> Result<MatchCounts, EvalError> {
    let missing_in_predictions: Vec<String> = gold
        .keys()
        .filter(|k| !pred.contains_key(*k))
        .cloned()
        .collect();
    let missing_in_gold: Vec<String> = pred
        .keys()
        .filter(|k| !gold.contains_key(*k))
        .cloned()
        .collect();
    if !missing_in_predictions.is_empty() || !missing_in_gold.is_empty() {
        return Err(EvalError::MisalignedRecords {
            missing_in_predictions,
            missing_in_gold,
        });
    }
    Ok(gold
        .iter()
        .map(|(id, g)| match_entities(g, &pred[id]))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(idx: &[usize]) -> Entity {
        Entity::from_indices("ADE", idx).unwrap()
    }

    #[test]
    fn identity_and_no_partial_credit() {
        let g = BTreeSet::from([e(&[3, 4, 5])]);
        assert_eq!(
            match_entities(&g, &g).all,
            Counts {
                tp: 1,
                fp: 0,
                fn_: 0
            }
        );
        let p = BTreeSet::from([e(&[3, 4])]);
        assert_eq!(
            match_entities(&g, &p).all,
            Counts {
                tp: 0,
                fp: 1,
                fn_: 1
            }
        );
        assert_eq!(
            match_entities(&BTreeSet::new(), &BTreeSet::new()),
            MatchCounts::default()
        );
    }

    #[test]
    fn label_matters() {
        let g = BTreeSet::from([e(&[1])]);
        let p = BTreeSet::from([Entity::from_indices("Disorder", &[1]).unwrap()]);
        assert_eq!(match_entities(&g, &p).all.tp, 0);
    }

    #[test]
    fn discontinuous_subcounts() {
        let g = BTreeSet::from([e(&[0, 2]), e(&[4])]);
        let p = BTreeSet::from([e(&[0, 2]), e(&[5, 7]), e(&[4])]);
        let c = match_entities(&g, &p);
        assert_eq!(
            c.all,
            Counts {
                tp: 2,
                fp: 1,
                fn_: 0
            }
        );
        assert_eq!(
            c.discontinuous,
            Counts {
                tp: 1,
                fp: 1,
                fn_: 0
            }
        );
    }

    #[test]
    fn prf_values() {
        let p = compute_prf(&Counts {
            tp: 1,
            fp: 1,
            fn_: 1,
        });
        assert_eq!((p.precision, p.recall, p.f1), (50.0, 50.0, 50.0));
        assert_eq!(compute_prf(&Counts::default()), Prf::default());
        assert_eq!(round_half_up(f1_from_pr(62.43, 79.90), 2), 70.09);
        let p = compute_prf(&Counts {
            tp: 2,
            fp: 1,
            fn_: 0,
        });
        assert_eq!(p.precision, 66.67);
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(1.005, 2), 1.01);
        assert_eq!(round_half_up(0.125, 2), 0.13);
        assert_eq!(round_half_up(2.675, 2), 2.68);
        assert_eq!(round_half_up(-0.125, 2), -0.13);
        assert_eq!(round_half_up(0.0, 2), 0.0);
        assert_eq!(round_half_up(81.58459, 2), 81.58);
    }

    #[test]
    fn misaligned_records_listed() {
        let gold = BTreeMap::from([
            ("a".to_string(), BTreeSet::new()),
            ("b".to_string(), BTreeSet::new()),
        ]);
        let pred = BTreeMap::from([
            ("a".to_string(), BTreeSet::new()),
            ("c".to_string(), BTreeSet::new()),
        ]);
        match score_records(&gold, &pred) {
            Err(EvalError::MisalignedRecords {
                missing_in_predictions,
                missing_in_gold,
            }) => {
                assert_eq!(missing_in_predictions, ["b"]);
                assert_eq!(missing_in_gold, ["c"]);
            }
            other => panic!("{other:?}"),
        }
    }
}
