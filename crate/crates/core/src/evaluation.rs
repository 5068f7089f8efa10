//! Per-step confusion matrices, accuracies and rejection rates.
//!
//! Step `l` compares the chain after block `l` with the true chain truncated
//! to `l + 1` steps (collapsed under informed stopping). A sample rejected
//! at block `r` counts as rejected at every step `>= r`.

use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeError, CascadeModel, CascadeOutput};
use crate::chains::{collapse_chain, remap_label, ChainClassIndex, ChainUniverse, PlatformId, SharingChain};
use crate::features::{FeatureKind, FeatureRecord};
use crate::separability::csv_field;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub block: usize,
    pub label_space_size: usize,
    /// Row/column labels of `confusion`.
    pub labels: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// Rejections per true class.
    pub rejected: Vec<u64>,
    pub total: u64,
    pub correct: u64,
    pub n_rejected: u64,
    pub acc_strict: f64,
    pub acc_conditional: f64,
    pub rejection_rate: f64,
    pub random_guess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: u32,
    /// `fused` or the single feature used.
    pub mode: String,
    pub informed_stop: Option<String>,
    pub n_samples: usize,
    pub steps: Vec<StepReport>,
}

/// Label space of step `block`.
pub fn step_label_space(universe: &ChainUniverse, block: usize, informed_stop: Option<PlatformId>) -> ChainClassIndex {
    match informed_stop {
        Some(stop) => universe.collapsed_class_index(block + 1, stop),
        None => universe.class_index(block + 1),
    }
}

/// Builds one report per block from cascade outputs and true chains.
pub fn evaluate_outputs(
    universe: &ChainUniverse,
    informed_stop: Option<PlatformId>,
    truths: &[SharingChain],
    outputs: &[CascadeOutput],
) -> Result<Vec<StepReport>, CascadeError> {
    if truths.len() != outputs.len() {
        return Err(CascadeError::InvalidArgument("labels and outputs differ in length".into()));
    }
    let mut steps = Vec::with_capacity(universe.max_len());
    for block in 0..universe.max_len() {
        let space = step_label_space(universe, block, informed_stop);
        let n = space.len();
        let mut confusion = vec![vec![0u64; n]; n];
        let mut rejected = vec![0u64; n];
        for (truth, out) in truths.iter().zip(outputs) {
            let mut t = remap_label(truth, block + 1);
            if let Some(stop) = informed_stop {
                t = collapse_chain(&t, stop);
            }
            let ti = space.index_of(&t).ok_or_else(|| {
                CascadeError::InvalidArgument(format!("label {} outside the label space", universe.format_label(truth)))
            })?;
            match out.chain_after(block) {
                None => rejected[ti] += 1,
                Some(pred) => {
                    let pi = space.index_of(pred).ok_or_else(|| {
                        CascadeError::Inference(format!("prediction {pred} outside the step {block} label space"))
                    })?;
                    confusion[ti][pi] += 1;
                }
            }
        }
        let total = truths.len() as u64;
        let correct: u64 = (0..n).map(|i| confusion[i][i]).sum();
        let n_rejected: u64 = rejected.iter().sum();
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        steps.push(StepReport {
            block,
            label_space_size: n,
            labels: space.labels(universe.platforms()),
            confusion,
            rejected,
            total,
            correct,
            n_rejected,
            acc_strict: ratio(correct, total),
            acc_conditional: ratio(correct, total - n_rejected),
            rejection_rate: ratio(n_rejected, total),
            random_guess: 1.0 / n as f64,
        });
    }
    Ok(steps)
}

/// Runs the model on labelled records and reports every step.
pub fn evaluate_cascade(
    model: &CascadeModel,
    records: &[FeatureRecord],
    single_feature: Option<FeatureKind>,
) -> Result<EvaluationReport, CascadeError> {
    let universe = model.universe();
    let truths = records
        .iter()
        .map(|r| {
            let label = r
                .label
                .as_deref()
                .ok_or_else(|| CascadeError::InvalidArgument(format!("record `{}` has no label", r.id)))?;
            Ok(universe.parse_label(label)?)
        })
        .collect::<Result<Vec<_>, CascadeError>>()?;
    let outputs = model.infer_batch(records, single_feature)?;
    Ok(EvaluationReport {
        version: REPORT_VERSION,
        mode: single_feature.map_or_else(|| "fused".to_string(), |f| f.name().to_string()),
        informed_stop: model
            .informed_stop()
            .map(|p| universe.platforms().name(p).to_string()),
        n_samples: records.len(),
        steps: evaluate_outputs(universe, model.informed_stop(), &truths, &outputs)?,
    })
}

/// Fraction of confusion mass whose true and predicted chains share `C[0]`;
/// `None` when nothing was classified.
pub fn confusion_block_structure(step: &StepReport, universe: &ChainUniverse) -> Result<Option<f64>, CascadeError> {
    let chains = step
        .labels
        .iter()
        .map(|l| universe.parse_label(l))
        .collect::<Result<Vec<_>, _>>()?;
    let mut inside = 0u64;
    let mut total = 0u64;
    for (i, row) in step.confusion.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            total += c;
            if chains[i].newest() == chains[j].newest() {
                inside += c;
            }
        }
    }
    Ok((total > 0).then(|| inside as f64 / total as f64))
}

/// Confusion matrix with a header row of chain labels and a final
/// `rejected` column.
pub fn confusion_csv(step: &StepReport) -> String {
    let mut s = String::from("true\\predicted");
    for l in &step.labels {
        s.push(',');
        s.push_str(&csv_field(l));
    }
    s.push_str(",rejected\n");
    for (i, row) in step.confusion.iter().enumerate() {
        s.push_str(&csv_field(&step.labels[i]));
        for c in row {
            s.push_str(&format!(",{c}"));
        }
        s.push_str(&format!(",{}\n", step.rejected[i]));
    }
    s
}
