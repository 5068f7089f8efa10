//! The backtracking cascade.
//!
//! Block `l` sees the chain reconstructed so far (length `l`) and either
//! keeps it or prepends one earlier platform. Each context chain has one
//! forest per feature; their decisions are fused by a BKS table, which may
//! reject and halt the reconstruction.
//!
//! Local classes at every block: `0` keeps the chain, `k >= 1` prepends
//! platform `k - 1`.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bks::{fit_bks, BksError, BksTable, FusedDecision, RejectReason};
use crate::chains::{remap_label, ChainError, ChainUniverse, PlatformId, PlatformSet, SharingChain};
use crate::features::{FeatureError, FeatureKind, FeatureRecord, FeatureSubset};
use crate::forest::{train_forest, ForestError, ForestParams, LabeledDataset, RandomForest};
use crate::seeds::derive_seed;

pub const MODEL_VERSION: u32 = 1;
pub const KEEP: usize = 0;

#[derive(Debug, thiserror::Error)]
pub enum CascadeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training: {0}")]
    Training(String),
    #[error("inference: {0}")]
    Inference(String),
    #[error("model: {0}")]
    Model(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Bks(#[from] BksError),
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Partial chains handled by block `block`: the empty context at block 0,
/// otherwise all chains of exactly `block` steps.
pub fn block_contexts(universe: &ChainUniverse, block: usize) -> Vec<SharingChain> {
    if block == 0 {
        vec![SharingChain::empty()]
    } else {
        universe.layer(block).to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DetectorKey {
    pub block: usize,
    pub context: SharingChain,
    pub feature: FeatureKind,
}

pub fn plan_detectors(universe: &ChainUniverse, features: &[FeatureKind]) -> Vec<DetectorKey> {
    (0..universe.max_len())
        .flat_map(|block| {
            block_contexts(universe, block).into_iter().flat_map(move |context| {
                features.iter().map(move |&feature| DetectorKey {
                    block,
                    context: context.clone(),
                    feature,
                })
            })
        })
        .collect()
}

/// Number of detectors per block for `k` features.
pub fn detector_counts(universe: &ChainUniverse, k: usize) -> Vec<usize> {
    (0..universe.max_len())
        .map(|b| k * block_contexts(universe, b).len())
        .collect()
}

/// Local target of `label` at a block whose context has `block` steps.
pub fn local_target(label: &SharingChain, block: usize) -> usize {
    match label.back(block) {
        Some(p) => 1 + p.index(),
        None => KEEP,
    }
}

/// Outcome of one block's detectors for a context.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockDecision {
    Class { local: usize, experts: Vec<usize> },
    Rejected { reason: RejectReason, experts: Vec<usize> },
}

/// Source of block decisions; implemented by trained models and by stubs.
pub trait BlockDecider {
    fn decide(&self, block: usize, context: &SharingChain) -> Result<BlockDecision, CascadeError>;
}

impl<F> BlockDecider for F
where
    F: Fn(usize, &SharingChain) -> BlockDecision,
{
    fn decide(&self, block: usize, context: &SharingChain) -> Result<BlockDecision, CascadeError> {
        Ok(self(block, context))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepAction {
    /// A previous block kept the chain.
    PassThrough,
    /// The chain's oldest step is the informed stop platform.
    InformedStop,
    Keep,
    Prepend(PlatformId),
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub block: usize,
    pub context: SharingChain,
    pub experts: Vec<usize>,
    pub action: StepAction,
    pub chain_after: SharingChain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    pub chain: SharingChain,
    pub rejected: bool,
    pub rejection_block: Option<usize>,
    pub trace: Vec<TraceStep>,
}

impl CascadeOutput {
    /// Chain after `block`, or `None` if rejected at or before it.
    pub fn chain_after(&self, block: usize) -> Option<&SharingChain> {
        if self.rejection_block.is_some_and(|r| r <= block) {
            return None;
        }
        self.trace.get(block).map(|s| &s.chain_after)
    }
}

/// Runs blocks `0..L` against `decider`.
pub fn run_cascade<D: BlockDecider + ?Sized>(
    platforms: &PlatformSet,
    max_len: usize,
    informed_stop: Option<PlatformId>,
    decider: &D,
) -> Result<CascadeOutput, CascadeError> {
    let mut chain = SharingChain::empty();
    let mut trace = Vec::with_capacity(max_len);
    for block in 0..max_len {
        let context = chain.clone();
        let step = |experts, action, after: &SharingChain| TraceStep {
            block,
            context: context.clone(),
            experts,
            action,
            chain_after: after.clone(),
        };
        if chain.len() < block {
            trace.push(step(Vec::new(), StepAction::PassThrough, &chain));
            continue;
        }
        if informed_stop.is_some() && block > 0 && chain.oldest() == informed_stop {
            trace.push(step(Vec::new(), StepAction::InformedStop, &chain));
            continue;
        }
        match decider.decide(block, &context)? {
            BlockDecision::Class { local, experts } => {
                let action = if local == KEEP {
                    if block == 0 {
                        return Err(CascadeError::Inference("first block decided to keep an empty chain".into()));
                    }
                    StepAction::Keep
                } else {
                    if local > platforms.len() {
                        return Err(CascadeError::Inference(format!("local class {local} out of range")));
                    }
                    let p = PlatformId((local - 1) as u8);
                    chain = chain.prepend(p);
                    StepAction::Prepend(p)
                };
                trace.push(step(experts, action, &chain));
            }
            BlockDecision::Rejected { reason, experts } => {
                trace.push(step(experts, StepAction::Rejected(reason), &chain));
                return Ok(CascadeOutput {
                    chain,
                    rejected: true,
                    rejection_block: Some(block),
                    trace,
                });
            }
        }
    }
    Ok(CascadeOutput {
        chain,
        rejected: false,
        rejection_block: None,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextModel {
    pub chain: SharingChain,
    pub forests: BTreeMap<FeatureKind, RandomForest>,
    pub bks: BksTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktrackBlock {
    pub index: usize,
    /// Canonical order, one per context.
    pub contexts: Vec<ContextModel>,
}

#[derive(Debug, Clone)]
pub struct CascadeModel {
    universe: ChainUniverse,
    features: Vec<FeatureKind>,
    informed_stop: Option<PlatformId>,
    forest_params: ForestParams,
    blocks: Vec<BacktrackBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub forest: ForestParams,
    pub informed_stop: Option<PlatformId>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            informed_stop: None,
        }
    }
}

fn labeled<'a>(
    universe: &ChainUniverse,
    records: &'a [FeatureRecord],
    features: &FeatureSubset,
) -> Result<Vec<(SharingChain, &'a FeatureRecord)>, CascadeError> {
    records
        .iter()
        .map(|r| {
            let label = r
                .label
                .as_deref()
                .ok_or_else(|| CascadeError::InvalidArgument(format!("record `{}` has no label", r.id)))?;
            let chain = universe.parse_label(label)?;
            if let Some(k) = features.iter().find(|&k| !r.has(k)) {
                return Err(CascadeError::InvalidArgument(format!("record `{}` lacks {k}", r.id)));
            }
            Ok((chain, r))
        })
        .collect()
}

fn matches_context(label: &SharingChain, block: usize, context: &SharingChain) -> bool {
    block == 0 || remap_label(label, block) == *context
}

fn detector_stream(block: usize, context_index: usize, feature: FeatureKind) -> u64 {
    ((block as u64) << 48) | ((context_index as u64) << 8) | feature as u64
}

/// Trains every detector on `train` and fits every BKS table on
/// `validation`. Returns the model and warnings for contexts without
/// validation samples.
pub fn train_cascade(
    universe: &ChainUniverse,
    features: &FeatureSubset,
    train: &[FeatureRecord],
    validation: &[FeatureRecord],
    config: &TrainConfig,
) -> Result<(CascadeModel, Vec<String>), CascadeError> {
    if train.is_empty() || validation.is_empty() {
        return Err(CascadeError::InvalidArgument(
            "training and validation sets must be nonempty".into(),
        ));
    }
    if let Some(stop) = config.informed_stop {
        if !universe.platforms().contains(stop) {
            return Err(CascadeError::InvalidArgument("informed stop platform is not in the platform set".into()));
        }
    }
    let train = labeled(universe, train, features)?;
    let val = labeled(universe, validation, features)?;
    let kinds = features.to_vec();
    let n_classes = universe.platforms().len() + 1;
    let expert_order: Vec<String> = kinds.iter().map(|k| k.name().to_string()).collect();

    let vectors = |set: &[(SharingChain, &FeatureRecord)], kind| -> Vec<Vec<f64>> {
        set.iter().map(|(_, r)| r.vector(kind).expect("checked by labeled")).collect()
    };
    let train_vecs: BTreeMap<FeatureKind, Vec<Vec<f64>>> = kinds.iter().map(|&k| (k, vectors(&train, k))).collect();
    let val_vecs: BTreeMap<FeatureKind, Vec<Vec<f64>>> = kinds.iter().map(|&k| (k, vectors(&val, k))).collect();

    let jobs: Vec<(usize, usize, SharingChain)> = (0..universe.max_len())
        .flat_map(|b| {
            block_contexts(universe, b)
                .into_iter()
                .enumerate()
                .map(move |(ci, c)| (b, ci, c))
        })
        .collect();

    let trained: Vec<(ContextModel, Option<String>)> = jobs
        .par_iter()
        .map(|(block, ci, context)| {
            let name = if context.is_empty() {
                "(empty)".to_string()
            } else {
                universe.format_label(context)
            };
            let rows: Vec<usize> = (0..train.len())
                .filter(|&i| matches_context(&train[i].0, *block, context))
                .collect();
            if rows.is_empty() {
                return Err(CascadeError::Training(format!(
                    "no training samples for context {name} at block {block}"
                )));
            }
            let targets: Vec<usize> = rows.iter().map(|&i| local_target(&train[i].0, *block)).collect();
            let mut forests = BTreeMap::new();
            for &kind in &kinds {
                let x: Vec<Vec<f64>> = rows.iter().map(|&i| train_vecs[&kind][i].clone()).collect();
                let data = LabeledDataset::new(x, targets.clone(), n_classes)?;
                let params = ForestParams {
                    n_estimators: config.forest.n_estimators,
                    seed: derive_seed(config.forest.seed, detector_stream(*block, *ci, kind)),
                };
                forests.insert(kind, train_forest(&data, &params)?);
            }

            let val_rows: Vec<usize> = (0..val.len())
                .filter(|&i| matches_context(&val[i].0, *block, context))
                .collect();
            let mut preds = Vec::with_capacity(val_rows.len());
            for &i in &val_rows {
                let row = kinds
                    .iter()
                    .map(|k| forests[k].predict(&val_vecs[k][i]))
                    .collect::<Result<Vec<_>, _>>()?;
                preds.push(row);
            }
            let labels: Vec<usize> = val_rows.iter().map(|&i| local_target(&val[i].0, *block)).collect();
            let bks = fit_bks(&preds, &labels, expert_order.clone(), n_classes)?;
            let warning = val_rows.is_empty().then(|| {
                format!("no validation samples for context {name} at block {block}; its fusion always rejects")
            });
            Ok((
                ContextModel {
                    chain: context.clone(),
                    forests,
                    bks,
                },
                warning,
            ))
        })
        .collect::<Result<_, CascadeError>>()?;

    let mut blocks: Vec<BacktrackBlock> = (0..universe.max_len())
        .map(|index| BacktrackBlock {
            index,
            contexts: Vec::new(),
        })
        .collect();
    let mut warnings = Vec::new();
    for ((block, _, _), (ctx, warning)) in jobs.iter().zip(trained) {
        blocks[*block].contexts.push(ctx);
        warnings.extend(warning);
    }
    let model = CascadeModel {
        universe: universe.clone(),
        features: kinds,
        informed_stop: config.informed_stop,
        forest_params: config.forest,
        blocks,
    };
    Ok((model, warnings))
}

struct ModelDecider<'a> {
    model: &'a CascadeModel,
    vectors: Vec<Vec<f64>>,
    single: Option<usize>,
}

impl BlockDecider for ModelDecider<'_> {
    fn decide(&self, block: usize, context: &SharingChain) -> Result<BlockDecision, CascadeError> {
        let ctx = self.model.context(block, context)?;
        if let Some(k) = self.single {
            let local = ctx.forests[&self.model.features[k]].predict(&self.vectors[k])?;
            return Ok(BlockDecision::Class {
                local,
                experts: vec![local],
            });
        }
        let experts = self
            .model
            .features
            .iter()
            .zip(&self.vectors)
            .map(|(kind, x)| ctx.forests[kind].predict(x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(match ctx.bks.fuse(&experts)? {
            FusedDecision::Accepted { class, .. } => BlockDecision::Class { local: class, experts },
            FusedDecision::Rejected(reason) => BlockDecision::Rejected { reason, experts },
        })
    }
}

impl CascadeModel {
    pub fn universe(&self) -> &ChainUniverse {
        &self.universe
    }

    pub fn features(&self) -> &[FeatureKind] {
        &self.features
    }

    pub fn informed_stop(&self) -> Option<PlatformId> {
        self.informed_stop
    }

    pub fn blocks(&self) -> &[BacktrackBlock] {
        &self.blocks
    }

    pub fn forest_params(&self) -> ForestParams {
        self.forest_params
    }

    /// Same detectors and fusion tables with a different informed stop.
    pub fn with_informed_stop(&self, stop: Option<PlatformId>) -> Result<Self, CascadeError> {
        if let Some(p) = stop {
            if !self.universe.platforms().contains(p) {
                return Err(CascadeError::InvalidArgument("informed stop platform is not in the platform set".into()));
            }
        }
        let mut m = self.clone();
        m.informed_stop = stop;
        Ok(m)
    }

    pub fn context(&self, block: usize, context: &SharingChain) -> Result<&ContextModel, CascadeError> {
        let b = self
            .blocks
            .get(block)
            .ok_or_else(|| CascadeError::Inference(format!("no block {block}")))?;
        b.contexts
            .binary_search_by(|c| c.chain.cmp(context))
            .map(|i| &b.contexts[i])
            .map_err(|_| CascadeError::Inference(format!("unknown context {context} at block {block}")))
    }

    fn vectors(&self, record: &FeatureRecord, kinds: &[FeatureKind]) -> Result<Vec<Vec<f64>>, CascadeError> {
        kinds
            .iter()
            .map(|&k| {
                record
                    .vector(k)
                    .ok_or_else(|| CascadeError::InvalidArgument(format!("record `{}` lacks {k}", record.id)))
            })
            .collect()
    }

    pub fn infer(&self, record: &FeatureRecord) -> Result<CascadeOutput, CascadeError> {
        let decider = ModelDecider {
            model: self,
            vectors: self.vectors(record, &self.features)?,
            single: None,
        };
        run_cascade(self.universe.platforms(), self.universe.max_len(), self.informed_stop, &decider)
    }

    /// Uses one feature's detectors directly; never rejects.
    pub fn infer_single_feature(&self, record: &FeatureRecord, feature: FeatureKind) -> Result<CascadeOutput, CascadeError> {
        let k = self
            .features
            .iter()
            .position(|&f| f == feature)
            .ok_or_else(|| CascadeError::InvalidArgument(format!("feature {feature} is not in the model")))?;
        let mut vectors = vec![Vec::new(); self.features.len()];
        vectors[k] = self.vectors(record, &[feature])?.remove(0);
        let decider = ModelDecider {
            model: self,
            vectors,
            single: Some(k),
        };
        run_cascade(self.universe.platforms(), self.universe.max_len(), self.informed_stop, &decider)
    }

    pub fn infer_batch(
        &self,
        records: &[FeatureRecord],
        single: Option<FeatureKind>,
    ) -> Result<Vec<CascadeOutput>, CascadeError> {
        records
            .par_iter()
            .map(|r| match single {
                Some(f) => self.infer_single_feature(r, f),
                None => self.infer(r),
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let platforms = self.universe.platforms();
        let file = ModelFile {
            version: MODEL_VERSION,
            platforms: platforms.names(),
            max_len: self.universe.max_len(),
            features: self.features.clone(),
            informed_stop: self.informed_stop.map(|p| platforms.name(p).to_string()),
            forest_params: self.forest_params,
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockFile {
                    block: b.index,
                    contexts: b
                        .contexts
                        .iter()
                        .map(|c| ContextFile {
                            chain: if c.chain.is_empty() {
                                String::new()
                            } else {
                                platforms.format_chain(&c.chain)
                            },
                            forests: c.forests.clone(),
                            bks: c.bks.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), CascadeError> {
        w.write_all(self.to_json().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// Parses and validates a model document.
    pub fn from_json(text: &str) -> Result<Self, CascadeError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_VERSION {
            return Err(CascadeError::Model(format!("unsupported version {}", file.version)));
        }
        let platforms = PlatformSet::new(file.platforms)?;
        let universe = ChainUniverse::enumerate(platforms, file.max_len)?;
        let features = FeatureSubset::new(file.features.iter().copied())
            .map_err(|_| CascadeError::Model("empty feature list".into()))?
            .to_vec();
        if features != file.features {
            return Err(CascadeError::Model("features must be unique and in canonical order".into()));
        }
        let informed_stop = match &file.informed_stop {
            Some(name) => Some(
                universe
                    .platforms()
                    .by_name(name)
                    .ok_or_else(|| CascadeError::Model(format!("unknown informed stop platform `{name}`")))?,
            ),
            None => None,
        };
        if file.blocks.len() != universe.max_len() {
            return Err(CascadeError::Model(format!(
                "{} blocks for L={}",
                file.blocks.len(),
                universe.max_len()
            )));
        }
        let n_classes = universe.platforms().len() + 1;
        let names: Vec<String> = features.iter().map(|k| k.name().to_string()).collect();
        let mut blocks = Vec::with_capacity(file.blocks.len());
        for (index, b) in file.blocks.into_iter().enumerate() {
            if b.block != index {
                return Err(CascadeError::Model(format!("block {} out of order", b.block)));
            }
            let expected = block_contexts(&universe, index);
            if b.contexts.len() != expected.len() {
                return Err(CascadeError::Model(format!("block {index} does not cover every context")));
            }
            let mut contexts = Vec::with_capacity(expected.len());
            for (c, want) in b.contexts.into_iter().zip(expected) {
                let chain = if c.chain.is_empty() {
                    SharingChain::empty()
                } else {
                    universe.parse_label(&c.chain)?
                };
                if chain != want {
                    return Err(CascadeError::Model(format!("block {index}: unexpected context `{}`", c.chain)));
                }
                if c.forests.keys().copied().collect::<Vec<_>>() != features {
                    return Err(CascadeError::Model(format!("block {index} context `{}`: forest set mismatch", c.chain)));
                }
                for (kind, f) in &c.forests {
                    f.validate()?;
                    if f.n_classes != n_classes || f.feature_dim != kind.dim() {
                        return Err(CascadeError::Model(format!(
                            "block {index} context `{}`: {kind} forest has wrong shape",
                            c.chain
                        )));
                    }
                }
                if c.bks.n_classes() != n_classes || c.bks.expert_order() != names.as_slice() {
                    return Err(CascadeError::Model(format!("block {index} context `{}`: fusion table mismatch", c.chain)));
                }
                contexts.push(ContextModel {
                    chain,
                    forests: c.forests,
                    bks: c.bks,
                });
            }
            blocks.push(BacktrackBlock { index, contexts });
        }
        Ok(Self {
            universe,
            features,
            informed_stop,
            forest_params: file.forest_params,
            blocks,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    platforms: Vec<String>,
    #[serde(rename = "L")]
    max_len: usize,
    features: Vec<FeatureKind>,
    informed_stop: Option<String>,
    forest_params: ForestParams,
    blocks: Vec<BlockFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockFile {
    block: usize,
    contexts: Vec<ContextFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextFile {
    chain: String,
    forests: BTreeMap<FeatureKind, RandomForest>,
    bks: BksTable,
}
