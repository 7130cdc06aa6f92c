//! Friedman average ranks and the Nemenyi critical difference.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alpha {
    #[serde(rename = "0.05")]
    P05,
    #[serde(rename = "0.10")]
    P10,
}

impl Alpha {
    pub fn value(self) -> f64 {
        match self {
            Alpha::P05 => 0.05,
            Alpha::P10 => 0.10,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Alpha::P05 => "0.05",
            Alpha::P10 => "0.10",
        }
    }
}

impl FromStr for Alpha {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "0.05" | ".05" => Ok(Alpha::P05),
            "0.10" | "0.1" | ".1" | ".10" => Ok(Alpha::P10),
            other => Err(format!(
                "unsupported alpha {other:?} (expected 0.05 or 0.10)"
            )),
        }
    }
}

/// Studentized range statistic divided by sqrt(2), for k = 2..=10.
const Q_05: [f64; 9] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164,
];
const Q_10: [f64; 9] = [
    1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920,
];

pub const MAX_SYSTEMS: usize = 10;

pub fn nemenyi_q(k: usize, alpha: Alpha) -> Result<f64, EvalError> {
    if !(2..=MAX_SYSTEMS).contains(&k) {
        return Err(EvalError::Unsupported(format!(
            "critical values cover 2..={MAX_SYSTEMS} systems, got {k}"
        )));
    }
    let table = match alpha {
        Alpha::P05 => &Q_05,
        Alpha::P10 => &Q_10,
    };
    Ok(table[k - 2])
}

/// `q_alpha(k) * sqrt(k(k+1) / (6N))`.
pub fn nemenyi_cd(k: usize, n: usize, alpha: Alpha) -> Result<f64, EvalError> {
    let q = nemenyi_q(k, alpha)?;
    if n == 0 {
        return Err(EvalError::Domain(
            "critical difference needs at least one block".into(),
        ));
    }
    let k = k as f64;
    Ok(q * (k * (k + 1.0) / (6.0 * n as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub systems: Vec<String>,
    pub blocks: usize,
    pub average_ranks: Vec<f64>,
    pub friedman_statistic: f64,
    pub critical_difference: Option<f64>,
    pub alpha: Option<Alpha>,
}

impl RankReport {
    pub fn with_critical_difference(mut self, alpha: Alpha) -> Result<Self, EvalError> {
        self.critical_difference = Some(nemenyi_cd(self.systems.len(), self.blocks, alpha)?);
        self.alpha = Some(alpha);
        Ok(self)
    }
}

/// Ranks of one block; the highest score gets rank 1, ties share the mean of
/// the positions they occupy.
pub fn rank_block(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &pos in &order[i..=j] {
            ranks[pos] = mean;
        }
        i = j + 1;
    }
    ranks
}

/// Average ranks over blocks (rows) of `k` scores each, one per system, and
/// the Friedman chi-square `12N/(k(k+1)) * (sum R_j^2 - k(k+1)^2/4)`.
/// `None` or NaN cells are missing and rejected.
pub fn friedman_ranks(
    systems: &[String],
    blocks: &[Vec<Option<f64>>],
) -> Result<RankReport, EvalError> {
    let k = systems.len();
    let n = blocks.len();
    if k < 2 || n < 2 {
        return Err(EvalError::Shape(format!(
            "ranking needs at least 2 systems and 2 blocks, got {k} and {n}"
        )));
    }
    let mut seen = BTreeSet::new();
    for s in systems {
        if !seen.insert(s.as_str()) {
            return Err(EvalError::DuplicateSystem(s.clone()));
        }
    }
    let mut sums = vec![0.0; k];
    for (b, row) in blocks.iter().enumerate() {
        if row.len() != k {
            return Err(EvalError::Shape(format!(
                "block {b} has {} cells, expected {k}",
                row.len()
            )));
        }
        let scores = row
            .iter()
            .enumerate()
            .map(|(s, cell)| {
                cell.filter(|v| !v.is_nan())
                    .ok_or_else(|| EvalError::MissingCell {
                        block: b,
                        system: systems[s].clone(),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        for (sum, r) in sums.iter_mut().zip(rank_block(&scores)) {
            *sum += r;
        }
    }
    let average_ranks: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let (kf, nf) = (k as f64, n as f64);
    let sum_sq: f64 = average_ranks.iter().map(|r| r * r).sum();
    let friedman_statistic =
        12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0);
    Ok(RankReport {
        systems: systems.to_vec(),
        blocks: n,
        average_ranks,
        friedman_statistic,
        critical_difference: None,
        alpha: None,
    })
}
