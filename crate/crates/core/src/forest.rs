//! Random forest of Gini-split decision trees.
//!
//! Each tree sees a bootstrap sample of size n and considers ceil(sqrt(d))
//! non-constant candidate features per node. Trees grow until pure or until
//! fewer than two samples remain. Tree `t` draws from `derive_seed(seed, t)`.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seeds::rng_for;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForestError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed model: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self, ForestError> {
        if features.is_empty() {
            return Err(ForestError::InvalidArgument("empty dataset".into()));
        }
        if features.len() != labels.len() {
            return Err(ForestError::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let d = features[0].len();
        if d == 0 {
            return Err(ForestError::InvalidArgument("zero-dimensional features".into()));
        }
        if let Some(row) = features.iter().find(|r| r.len() != d) {
            return Err(ForestError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ForestError::InvalidArgument("non-finite feature value".into()));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(ForestError::InvalidArgument(format!("label {y} >= n_classes {n_classes}")));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 10,
            seed: 0,
        }
    }
}

/// `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

/// Flat node array; node 0 is the root and children follow their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

fn argmax_first<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl DecisionTree {
    pub fn leaf_counts(&self, x: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax_first(self.leaf_counts(x))
    }

    /// Split features in node order.
    pub fn split_features(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    fn validate(&self, n_classes: usize, dim: usize) -> Result<(), ForestError> {
        let bad = |m: String| Err(ForestError::Malformed(m));
        if self.nodes.is_empty() {
            return bad("empty tree".into());
        }
        let mut referenced = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= dim || !threshold.is_finite() {
                        return bad(format!("node {i}: invalid split"));
                    }
                    for &c in [left, right] {
                        if c <= i || c >= self.nodes.len() || referenced[c] {
                            return bad(format!("node {i}: invalid child {c}"));
                        }
                        referenced[c] = true;
                    }
                }
                Node::Leaf { counts } => {
                    if counts.len() != n_classes || counts.iter().all(|&c| c == 0) {
                        return bad(format!("node {i}: invalid leaf counts"));
                    }
                }
            }
        }
        if referenced.iter().skip(1).any(|r| !r) {
            return bad("unreachable node".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_classes: usize,
    pub feature_dim: usize,
    pub seed: u64,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn predict(&self, x: &[f64]) -> Result<usize, ForestError> {
        if x.len() != self.feature_dim {
            return Err(ForestError::DimensionMismatch {
                expected: self.feature_dim,
                got: x.len(),
            });
        }
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        Ok(argmax_first(&votes))
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>, ForestError> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Structural checks for models read from disk.
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.trees.is_empty() || self.n_classes == 0 || self.feature_dim == 0 {
            return Err(ForestError::Malformed("empty forest".into()));
        }
        for t in &self.trees {
            t.validate(self.n_classes, self.feature_dim)?;
        }
        Ok(())
    }
}

pub fn train_forest(data: &LabeledDataset, params: &ForestParams) -> Result<RandomForest, ForestError> {
    if params.n_estimators == 0 {
        return Err(ForestError::InvalidArgument("n_estimators must be at least 1".into()));
    }
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(params.seed, t as u64);
            let n = data.len();
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grow_tree(data, sample, &mut rng)
        })
        .collect();
    Ok(RandomForest {
        n_classes: data.n_classes,
        feature_dim: data.dim(),
        seed: params.seed,
        trees,
    })
}

struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.score > o.score
                    || (self.score == o.score
                        && (self.feature < o.feature || (self.feature == o.feature && self.threshold < o.threshold)))
            }
        }
    }
}

fn class_counts(data: &LabeledDataset, idx: &[usize]) -> Vec<u32> {
    let mut c = vec![0u32; data.n_classes];
    for &i in idx {
        c[data.labels[i]] += 1;
    }
    c
}

/// Best threshold on one feature, maximizing `sum_child (sum_k n_k^2) / n_child`
/// (equivalent to minimizing weighted Gini). `None` if the feature is
/// constant on `idx`.
fn best_threshold(data: &LabeledDataset, idx: &[usize], feature: usize, total: &[u32]) -> Option<Candidate> {
    let mut order: Vec<(f64, usize)> = idx.iter().map(|&i| (data.features[i][feature], data.labels[i])).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    if order[0].0 == order[order.len() - 1].0 {
        return None;
    }
    let n = order.len() as f64;
    let mut left = vec![0u32; total.len()];
    let mut left_sq: f64 = 0.0;
    let mut right_sq: f64 = total.iter().map(|&c| (c as f64).powi(2)).sum();
    let mut best: Option<Candidate> = None;
    for k in 0..order.len() - 1 {
        let y = order[k].1;
        let (l, r) = (left[y] as f64, (total[y] - left[y]) as f64);
        left_sq += 2.0 * l + 1.0;
        right_sq -= 2.0 * r - 1.0;
        left[y] += 1;
        let (a, b) = (order[k].0, order[k + 1].0);
        if a == b {
            continue;
        }
        let nl = (k + 1) as f64;
        let score = left_sq / nl + right_sq / (n - nl);
        let mut threshold = a + (b - a) / 2.0;
        if threshold >= b {
            threshold = a;
        }
        let c = Candidate {
            score,
            feature,
            threshold,
        };
        if best.as_ref().map_or(true, |o| c.score > o.score) {
            best = Some(c);
        }
    }
    best
}

fn grow_tree<R: Rng>(data: &LabeledDataset, sample: Vec<usize>, rng: &mut R) -> DecisionTree {
    let d = data.dim();
    let m = (d as f64).sqrt().ceil() as usize;
    let mut nodes: Vec<Node> = vec![Node::Leaf { counts: Vec::new() }];
    let mut stack = vec![(0usize, sample)];
    let mut feature_order: Vec<usize> = (0..d).collect();
    while let Some((slot, idx)) = stack.pop() {
        let counts = class_counts(data, &idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || idx.len() < 2 {
            nodes[slot] = Node::Leaf { counts };
            continue;
        }
        feature_order.shuffle(rng);
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        for &f in &feature_order {
            if visited == m {
                break;
            }
            if let Some(c) = best_threshold(data, &idx, f, &counts) {
                visited += 1;
                if c.beats(&best) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best else {
            nodes[slot] = Node::Leaf { counts };
            continue;
        };
        let (l_idx, r_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| data.features[i][best.feature] <= best.threshold);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { counts: Vec::new() });
        nodes.push(Node::Leaf { counts: Vec::new() });
        nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        stack.push((right, r_idx));
        stack.push((left, l_idx));
    }
    DecisionTree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn line_data() -> LabeledDataset {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 1..=50 {
            xs.push(vec![-(i as f64) * 0.1]);
            ys.push(0);
            xs.push(vec![i as f64 * 0.1]);
            ys.push(1);
        }
        LabeledDataset::new(xs, ys, 2).unwrap()
    }

    fn gaussians(n_per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let means = [(0.0, 0.0), (8.0, 0.0), (4.0, 7.0)];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n_per {
            for (c, &(mx, my)) in means.iter().enumerate() {
                xs.push(vec![mx + noise.sample(&mut rng), my + noise.sample(&mut rng)]);
                ys.push(c);
            }
        }
        (xs, ys)
    }

    #[test]
    fn separable_line_is_learned() {
        let data = line_data();
        let f = train_forest(&data, &ForestParams { n_estimators: 10, seed: 1 }).unwrap();
        let preds = f.predict_batch(data.features()).unwrap();
        assert_eq!(preds, data.labels());
        assert_eq!(f.predict(&[-3.0]).unwrap(), 0);
        assert_eq!(f.trees.len(), 10);
    }

    #[test]
    fn training_is_bit_identical() {
        let data = line_data();
        let p = ForestParams { n_estimators: 10, seed: 9 };
        let a = serde_json::to_string(&train_forest(&data, &p).unwrap()).unwrap();
        let b = serde_json::to_string(&train_forest(&data, &p).unwrap()).unwrap();
        assert_eq!(a, b);
        let back: RandomForest = serde_json::from_str(&a).unwrap();
        back.validate().unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), a);
    }

    #[test]
    fn gaussian_blobs_generalize() {
        let (xs, ys) = gaussians(100, 42);
        let (txs, tys) = gaussians(100, 43);
        let f = train_forest(&LabeledDataset::new(xs, ys, 3).unwrap(), &ForestParams { n_estimators: 10, seed: 42 }).unwrap();
        let preds = f.predict_batch(&txs).unwrap();
        let acc = preds.iter().zip(&tys).filter(|(a, b)| a == b).count() as f64 / tys.len() as f64;
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn leaf_and_vote_ties() {
        let leaf = |counts: Vec<u32>| DecisionTree { nodes: vec![Node::Leaf { counts }] };
        let one = RandomForest { n_classes: 2, feature_dim: 1, seed: 0, trees: vec![leaf(vec![0, 5])] };
        assert_eq!(one.predict(&[0.0]).unwrap(), 1);
        let two = RandomForest { n_classes: 2, feature_dim: 1, seed: 0, trees: vec![leaf(vec![5, 0]), leaf(vec![0, 5])] };
        assert_eq!(two.predict(&[0.0]).unwrap(), 0);
        assert_eq!(
            two.predict(&[0.0, 1.0]),
            Err(ForestError::DimensionMismatch { expected: 1, got: 2 })
        );
        assert!(two.predict_batch(&[]).unwrap().is_empty());
    }

    #[test]
    fn invalid_inputs() {
        assert!(LabeledDataset::new(vec![], vec![], 2).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0]], vec![2], 2).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0, 1], 2).is_err());
        assert!(LabeledDataset::new(vec![vec![f64::NAN]], vec![0], 2).is_err());
        assert!(train_forest(&line_data(), &ForestParams { n_estimators: 0, seed: 0 }).is_err());
    }

    #[test]
    fn malformed_models_are_rejected() {
        let mut f = train_forest(&line_data(), &ForestParams { n_estimators: 2, seed: 0 }).unwrap();
        f.validate().unwrap();
        if let Node::Split { left, .. } = &mut f.trees[0].nodes[0] {
            *left = 0;
        }
        assert!(f.validate().is_err());
    }

    #[test]
    fn midpoint_falls_back_when_rounding_hits_upper_value() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let data = LabeledDataset::new(vec![vec![a], vec![b]], vec![0, 1], 2).unwrap();
        let c = best_threshold(&data, &[0, 1], 0, &[1, 1]).unwrap();
        assert_eq!(c.threshold, a);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn single_class_always_predicted(n in 1usize..30, d in 1usize..5, class in 0usize..3, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
            let f = train_forest(&LabeledDataset::new(xs, vec![class; n], 3).unwrap(), &ForestParams { n_estimators: 3, seed }).unwrap();
            for _ in 0..10 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
                prop_assert_eq!(f.predict(&x).unwrap(), class);
            }
        }

        #[test]
        fn rank_transform_preserves_split_features(n in 4usize..40, d in 1usize..6, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-3i32..4) as f64).collect()).collect();
            let ys: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let ranked: Vec<Vec<f64>> = xs.iter().map(|row| {
                row.iter().enumerate().map(|(j, &v)| xs.iter().filter(|r| r[j] < v).count() as f64).collect()
            }).collect();
            let p = ForestParams { n_estimators: 4, seed };
            let a = train_forest(&LabeledDataset::new(xs, ys.clone(), 3).unwrap(), &p).unwrap();
            let b = train_forest(&LabeledDataset::new(ranked, ys, 3).unwrap(), &p).unwrap();
            for (ta, tb) in a.trees.iter().zip(&b.trees) {
                prop_assert_eq!(ta.split_features(), tb.split_features());
            }
        }

        #[test]
        fn batch_is_permutation_equivariant(seed: u64) {
            let data = line_data();
            let f = train_forest(&data, &ForestParams { n_estimators: 3, seed }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.gen_range(-6.0..6.0)]).collect();
            let mut perm: Vec<usize> = (0..xs.len()).collect();
            perm.shuffle(&mut rng);
            let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| xs[i].clone()).collect();
            let p = f.predict_batch(&xs).unwrap();
            let q = f.predict_batch(&shuffled).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(q[k], p[i]);
            }
        }
    }
}
