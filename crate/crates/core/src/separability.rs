//! Nearest-neighbor separability measures over a feature matrix.
//!
//! LSR of a sample is its Euclidean distance to the nearest sample of
//! another class. IER is the sum of intra-class nearest-neighbor distances
//! over the sum of extra-class ones.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{PlatformSet, SharingChain};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SeparabilityError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check(features: &[Vec<f64>], labels: &[usize]) -> Result<(), SeparabilityError> {
    if features.len() != labels.len() {
        return Err(SeparabilityError::InvalidArgument(format!(
            "{} rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(first) = features.first() {
        if features.iter().any(|r| r.len() != first.len()) {
            return Err(SeparabilityError::InvalidArgument("rows differ in dimension".into()));
        }
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SeparabilityError::InvalidArgument("non-finite feature value".into()));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(SeparabilityError::InvalidArgument(
            "at least two classes are required (no enemies exist)".into(),
        ));
    }
    Ok(())
}

/// Per-sample (intra-class NN distance, extra-class NN distance).
fn nn_distances(features: &[Vec<f64>], labels: &[usize]) -> Vec<(f64, f64)> {
    (0..features.len())
        .into_par_iter()
        .map(|i| {
            let mut intra = f64::INFINITY;
            let mut extra = f64::INFINITY;
            for j in 0..features.len() {
                if i == j {
                    continue;
                }
                let d = distance(&features[i], &features[j]);
                if labels[j] == labels[i] {
                    intra = intra.min(d);
                } else {
                    extra = extra.min(d);
                }
            }
            (intra, extra)
        })
        .collect()
}

pub fn lsr(features: &[Vec<f64>], labels: &[usize]) -> Result<Vec<f64>, SeparabilityError> {
    check(features, labels)?;
    Ok(nn_distances(features, labels).into_iter().map(|(_, e)| e).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ier {
    pub intra_sum: f64,
    pub extra_sum: f64,
    /// `None` when the extra-class sum is zero.
    pub ratio: Option<f64>,
    pub infinite: bool,
}

impl Ier {
    pub fn value(&self) -> f64 {
        self.ratio.unwrap_or(f64::INFINITY)
    }
}

pub fn ier(features: &[Vec<f64>], labels: &[usize]) -> Result<Ier, SeparabilityError> {
    check(features, labels)?;
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &y in labels {
        *sizes.entry(y).or_default() += 1;
    }
    if let Some((y, _)) = sizes.iter().find(|(_, &n)| n < 2) {
        return Err(SeparabilityError::InvalidArgument(format!(
            "class {y} has a single sample (no intra-class neighbor)"
        )));
    }
    let nn = nn_distances(features, labels);
    let intra_sum: f64 = nn.iter().map(|p| p.0).sum();
    let extra_sum: f64 = nn.iter().map(|p| p.1).sum();
    let infinite = extra_sum == 0.0;
    Ok(Ier {
        intra_sum,
        extra_sum,
        ratio: (!infinite).then(|| intra_sum / extra_sum),
        infinite,
    })
}

/// Per-column z-scoring; constant columns become zero.
pub fn standardize(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = features.first() else {
        return Vec::new();
    };
    let n = features.len() as f64;
    let d = first.len();
    let mut mean = vec![0.0; d];
    for row in features {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; d];
    for row in features {
        for j in 0..d {
            sd[j] += (row[j] - mean[j]).powi(2) / n;
        }
    }
    for s in &mut sd {
        *s = s.sqrt();
    }
    features
        .iter()
        .map(|row| {
            (0..d)
                .map(|j| if sd[j] > 0.0 { (row[j] - mean[j]) / sd[j] } else { 0.0 })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quartiles by linear interpolation between order statistics.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Summary {
        min: v[0],
        q1: q(0.25),
        median: q(0.5),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        q3: q(0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub name: String,
    pub count: usize,
    /// Absent for empty groups.
    pub stats: Option<Summary>,
}

/// Chain position used for grouping: `0` is `C[0]`, `1` is `C[-1]`.
pub fn aggregate_by_platform(
    values: &[f64],
    labels: &[SharingChain],
    platforms: &PlatformSet,
    back: usize,
) -> Vec<GroupStats> {
    let position = if back == 0 { "C[0]".to_string() } else { format!("C[-{back}]") };
    let mut groups: Vec<GroupStats> = platforms
        .ids()
        .map(|p| {
            let members: Vec<f64> = labels
                .iter()
                .zip(values)
                .filter(|(c, _)| c.back(back) == Some(p))
                .map(|(_, &v)| v)
                .collect();
            GroupStats {
                name: format!("{position}={}", platforms.name(p)),
                count: members.len(),
                stats: summarize(&members),
            }
        })
        .collect();
    let rest: Vec<f64> = labels
        .iter()
        .zip(values)
        .filter(|(c, _)| c.back(back).is_none())
        .map(|(_, &v)| v)
        .collect();
    groups.push(GroupStats {
        name: format!("{position} absent"),
        count: rest.len(),
        stats: summarize(&rest),
    });
    groups
}

/// Samples whose chain has `platform` neither at `C[0]` nor at `C[-1]`.
pub fn complement_group(values: &[f64], labels: &[SharingChain], platforms: &PlatformSet, platform: crate::chains::PlatformId) -> GroupStats {
    let members: Vec<f64> = labels
        .iter()
        .zip(values)
        .filter(|(c, _)| c.back(0) != Some(platform) && c.back(1) != Some(platform))
        .map(|(_, &v)| v)
        .collect();
    GroupStats {
        name: format!("no {} in C[0],C[-1]", platforms.name(platform)),
        count: members.len(),
        stats: summarize(&members),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Lsr,
    Ier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub version: u32,
    pub metric: Metric,
    pub standardized: bool,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sample_lsr: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class_mean_lsr: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ier: Option<Ier>,
    pub groups: Vec<GroupStats>,
    pub notes: Vec<String>,
}

/// Full report over labelled chains. Class identity is the chain label.
pub fn report(
    features: &[Vec<f64>],
    labels: &[SharingChain],
    platforms: &PlatformSet,
    metric: Metric,
    standardized: bool,
) -> Result<SeparabilityReport, SeparabilityError> {
    let x = if standardized { standardize(features) } else { features.to_vec() };
    let mut classes: Vec<&SharingChain> = labels.iter().collect();
    classes.sort();
    classes.dedup();
    let ids: Vec<usize> = labels
        .iter()
        .map(|c| classes.binary_search(&c).expect("label present"))
        .collect();
    let mut out = SeparabilityReport {
        version: REPORT_VERSION,
        metric,
        standardized,
        n_samples: labels.len(),
        per_sample_lsr: None,
        per_class_mean_lsr: None,
        ier: None,
        groups: Vec::new(),
        notes: Vec::new(),
    };
    match metric {
        Metric::Ier => out.ier = Some(ier(&x, &ids)?),
        Metric::Lsr => {
            let values = lsr(&x, &ids)?;
            let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
            for (c, &v) in labels.iter().zip(&values) {
                let e = sums.entry(platforms.format_chain(c)).or_default();
                e.0 += v;
                e.1 += 1;
            }
            out.per_class_mean_lsr = Some(sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect());
            for back in [0, 1] {
                out.groups.extend(aggregate_by_platform(&values, labels, platforms, back));
            }
            for p in platforms.ids() {
                out.groups.push(complement_group(&values, labels, platforms, p));
            }
            out.per_sample_lsr = Some(values);
        }
    }
    for g in &out.groups {
        if g.count == 0 {
            out.notes.push(format!("group `{}` is empty", g.name));
        }
    }
    Ok(out)
}

/// `id,label,lsr` rows.
pub fn lsr_csv(ids: &[String], labels: &[String], values: &[f64]) -> String {
    let mut s = String::from("id,label,lsr\n");
    for ((id, label), v) in ids.iter().zip(labels).zip(values) {
        s.push_str(&format!("{},{},{}\n", csv_field(id), csv_field(label), v));
    }
    s
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
