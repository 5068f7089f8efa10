//! Behavior-Knowledge-Space fusion.
//!
//! A table has one unit per tuple of expert decisions and counts, per unit,
//! how often each true class was seen. Fusion picks the unit's unique
//! majority class or rejects.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Upper bound on `n_classes^K`.
pub const MAX_UNITS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BksError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    EmptyUnit,
    Tie,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusedDecision {
    Accepted { class: usize, posterior: Vec<f64> },
    Rejected(RejectReason),
}

impl FusedDecision {
    pub fn class(&self) -> Option<usize> {
        match self {
            FusedDecision::Accepted { class, .. } => Some(*class),
            FusedDecision::Rejected(_) => None,
        }
    }
}

fn unit_count(k: usize, n_classes: usize) -> Result<usize, BksError> {
    if k == 0 || n_classes == 0 {
        return Err(BksError::InvalidArgument("K and n_classes must be positive".into()));
    }
    let mut q: usize = 1;
    for _ in 0..k {
        q = q
            .checked_mul(n_classes)
            .filter(|&q| q <= MAX_UNITS)
            .ok_or_else(|| BksError::InvalidArgument("too many BKS units".into()))?;
    }
    Ok(q)
}

/// Mixed-radix index `sum_k decisions[k] * n_classes^k`.
pub fn unit_index(decisions: &[usize], n_classes: usize) -> Result<usize, BksError> {
    let mut idx = 0;
    let mut radix = 1;
    for &d in decisions {
        if d >= n_classes {
            return Err(BksError::InvalidArgument(format!("decision {d} >= n_classes {n_classes}")));
        }
        idx += d * radix;
        radix *= n_classes;
    }
    Ok(idx)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SparseTable", into = "SparseTable")]
pub struct BksTable {
    expert_order: Vec<String>,
    n_classes: usize,
    counts: Vec<Vec<u32>>,
}

/// On-disk form: only non-empty units are listed.
#[derive(Serialize, Deserialize)]
struct SparseTable {
    expert_order: Vec<String>,
    n_classes: usize,
    units: BTreeMap<usize, Vec<u32>>,
}

impl From<BksTable> for SparseTable {
    fn from(t: BksTable) -> Self {
        let units = t
            .counts
            .into_iter()
            .enumerate()
            .filter(|(_, c)| c.iter().any(|&v| v > 0))
            .collect();
        SparseTable {
            expert_order: t.expert_order,
            n_classes: t.n_classes,
            units,
        }
    }
}

impl TryFrom<SparseTable> for BksTable {
    type Error = BksError;

    fn try_from(s: SparseTable) -> Result<Self, Self::Error> {
        let mut t = BksTable::empty(s.expert_order, s.n_classes)?;
        for (u, c) in s.units {
            if u >= t.counts.len() || c.len() != t.n_classes {
                return Err(BksError::InvalidArgument(format!("invalid unit {u}")));
            }
            t.counts[u] = c;
        }
        Ok(t)
    }
}

impl BksTable {
    /// A table with every unit empty.
    pub fn empty(expert_order: Vec<String>, n_classes: usize) -> Result<Self, BksError> {
        let q = unit_count(expert_order.len(), n_classes)?;
        Ok(Self {
            expert_order,
            n_classes,
            counts: vec![vec![0; n_classes]; q],
        })
    }

    pub fn k(&self) -> usize {
        self.expert_order.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_units(&self) -> usize {
        self.counts.len()
    }

    pub fn expert_order(&self) -> &[String] {
        &self.expert_order
    }

    pub fn unit_counts(&self, unit: usize) -> &[u32] {
        &self.counts[unit]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| c as u64).sum()
    }

    pub fn fuse(&self, decisions: &[usize]) -> Result<FusedDecision, BksError> {
        if decisions.len() != self.k() {
            return Err(BksError::InvalidArgument(format!(
                "{} decisions for {} experts",
                decisions.len(),
                self.k()
            )));
        }
        let counts = &self.counts[unit_index(decisions, self.n_classes)?];
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total == 0 {
            return Ok(FusedDecision::Rejected(RejectReason::EmptyUnit));
        }
        let max = *counts.iter().max().expect("n_classes > 0");
        let mut winners = counts.iter().enumerate().filter(|(_, &c)| c == max);
        let (class, _) = winners.next().expect("max exists");
        if winners.next().is_some() {
            return Ok(FusedDecision::Rejected(RejectReason::Tie));
        }
        let posterior = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(FusedDecision::Accepted { class, posterior })
    }
}

/// Tallies true classes per unit of expert decisions.
pub fn fit_bks(
    predictions: &[Vec<usize>],
    labels: &[usize],
    expert_order: Vec<String>,
    n_classes: usize,
) -> Result<BksTable, BksError> {
    if predictions.len() != labels.len() {
        return Err(BksError::InvalidArgument(format!(
            "{} prediction rows but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut table = BksTable::empty(expert_order, n_classes)?;
    for (row, &y) in predictions.iter().zip(labels) {
        if row.len() != table.k() {
            return Err(BksError::InvalidArgument(format!(
                "prediction row has {} entries for {} experts",
                row.len(),
                table.k()
            )));
        }
        if y >= n_classes {
            return Err(BksError::InvalidArgument(format!("label {y} >= n_classes {n_classes}")));
        }
        let u = unit_index(row, n_classes)?;
        table.counts[u][y] += 1;
    }
    Ok(table)
}
