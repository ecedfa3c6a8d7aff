//! Gradient-boosted regression trees on binary log loss.
//!
//! The ensemble's additive margin is the log-odds of a home win. Each node
//! records its cover (number of training rows routed through it), which the
//! attribution module needs for conditional expectations.

use serde::{Deserialize, Serialize};

use crate::dataset::PairedSample;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Splits with gain at or below this are not taken.
const MIN_SPLIT_GAIN: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set has a single class")]
    SingleClass,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input feature {0} is not finite")]
    NonFiniteInput(usize),
    #[error("tree {tree}, node {node}: {message}")]
    Structure {
        tree: usize,
        node: usize,
        message: String,
    },
    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("schema fingerprint mismatch: model has `{found}`, dataset has `{expected}`")]
    FingerprintMismatch { expected: String, found: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// Feature index tested at this node; `None` for leaves.
    pub split: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub cover: f64,
    pub leaf_value: f64,
}

impl TreeNode {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self {
            split: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            cover,
            leaf_value: value,
        }
    }

    pub fn internal(feature: usize, threshold: f64, left: usize, right: usize, cover: f64) -> Self {
        Self {
            split: Some(feature),
            threshold,
            left,
            right,
            cover,
            leaf_value: 0.0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// A binary tree stored as an array of nodes; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    depth: usize,
}

impl Tree {
    /// Validates the node array: every node reachable from the root exactly
    /// once, internal covers equal the sum of their children's covers, all
    /// values finite.
    pub fn new(nodes: Vec<TreeNode>) -> Result<Self> {
        Self::checked(nodes, 0)
    }

    fn checked(nodes: Vec<TreeNode>, tree: usize) -> Result<Self> {
        let err = |node: usize, message: String| ModelError::Structure {
            tree,
            node,
            message,
        };
        if nodes.is_empty() {
            return Err(err(0, "tree has no nodes".into()));
        }
        let mut visited = vec![false; nodes.len()];
        let mut depth = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, d)) = stack.pop() {
            if visited[id] {
                return Err(err(id, "node reached twice (cycle or shared child)".into()));
            }
            visited[id] = true;
            depth = depth.max(d);
            let node = &nodes[id];
            if !(node.cover.is_finite() && node.cover >= 0.0) {
                return Err(err(id, format!("invalid cover {}", node.cover)));
            }
            if node.is_leaf() {
                if !node.leaf_value.is_finite() {
                    return Err(err(id, "leaf value is not finite".into()));
                }
                continue;
            }
            if !node.threshold.is_finite() {
                return Err(err(id, "threshold is not finite".into()));
            }
            for child in [node.left, node.right] {
                if child >= nodes.len() {
                    return Err(err(id, format!("child index {child} out of range")));
                }
            }
            let sum = nodes[node.left].cover + nodes[node.right].cover;
            if (node.cover - sum).abs() > 1e-9 * node.cover.max(1.0) {
                return Err(err(
                    id,
                    format!("cover {} differs from children's sum {sum}", node.cover),
                ));
            }
            stack.push((node.right, d + 1));
            stack.push((node.left, d + 1));
        }
        if let Some(orphan) = visited.iter().position(|v| !v) {
            return Err(err(orphan, "node unreachable from the root".into()));
        }
        Ok(Self { nodes, depth })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            match node.split {
                None => return id,
                Some(f) => id = if x[f] <= node.threshold { node.left } else { node.right },
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].leaf_value
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes.iter().filter_map(|n| n.split).max()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    base_margin: f64,
    feature_count: usize,
    schema_fingerprint: String,
}

impl TreeEnsemble {
    pub fn new(trees: Vec<Tree>, base_margin: f64, feature_count: usize) -> Result<Self> {
        if !base_margin.is_finite() {
            return Err(ModelError::InvalidConfig("base margin is not finite".into()));
        }
        for (t, tree) in trees.iter().enumerate() {
            if let Some(f) = tree.max_feature().filter(|&f| f >= feature_count) {
                let node = tree.nodes.iter().position(|n| n.split == Some(f)).unwrap_or(0);
                return Err(ModelError::Structure {
                    tree: t,
                    node,
                    message: format!("split feature {f} >= feature count {feature_count}"),
                });
            }
        }
        Ok(Self {
            trees,
            base_margin,
            feature_count,
            schema_fingerprint: String::new(),
        })
    }

    pub fn with_schema_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.schema_fingerprint = fingerprint.into();
        self
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn base_margin(&self) -> f64 {
        self.base_margin
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    /// Concatenates the trees of two ensembles; base margins add.
    pub fn concat(&self, other: &TreeEnsemble) -> Result<TreeEnsemble> {
        if self.feature_count != other.feature_count {
            return Err(ModelError::DimensionMismatch {
                expected: self.feature_count,
                got: other.feature_count,
            });
        }
        let trees = self.trees.iter().chain(&other.trees).cloned().collect();
        Ok(TreeEnsemble::new(trees, self.base_margin + other.base_margin, self.feature_count)?
            .with_schema_fingerprint(self.schema_fingerprint.clone()))
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_count {
            return Err(ModelError::DimensionMismatch {
                expected: self.feature_count,
                got: x.len(),
            });
        }
        match x.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(ModelError::NonFiniteInput(i)),
            None => Ok(()),
        }
    }

    /// `base_margin + Σ_t tree_t(x)`; a node routes left iff `x[f] <= threshold`.
    pub fn predict_margin(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.margin_unchecked(x))
    }

    pub(crate) fn margin_unchecked(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.base_margin, |acc, tree| acc + tree.predict(x))
    }

    /// Home-win probability, strictly inside (0, 1).
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(logistic(self.predict_margin(x)?))
    }

    pub fn predict_proba_loss(&self, x: &[f64]) -> Result<f64> {
        Ok(1.0 - self.predict_proba(x)?)
    }

    pub fn serialize(&self) -> String {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            base_margin: self.base_margin,
            feature_count: self.feature_count,
            schema_fingerprint: self.schema_fingerprint.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| TreeFile {
                    nodes: t.nodes.iter().map(NodeFile::from).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Version {
                found: file.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let mut trees = Vec::with_capacity(file.trees.len());
        for (t, tree) in file.trees.into_iter().enumerate() {
            let nodes = tree
                .nodes
                .into_iter()
                .enumerate()
                .map(|(i, n)| n.into_node(t, i))
                .collect::<Result<Vec<_>>>()?;
            trees.push(Tree::checked(nodes, t)?);
        }
        Ok(TreeEnsemble::new(trees, file.base_margin, file.feature_count)?
            .with_schema_fingerprint(file.schema_fingerprint))
    }

    /// Deserializes and compares the stored fingerprint against `expected`.
    /// A mismatch is an error when `strict`, otherwise a logged warning.
    pub fn deserialize_checked(text: &str, expected: &str, strict: bool) -> Result<Self> {
        let model = Self::deserialize(text)?;
        if let Err(e) = model.verify_fingerprint(expected) {
            if strict {
                return Err(e);
            }
            log::warn!("{e}");
        }
        Ok(model)
    }

    pub fn verify_fingerprint(&self, expected: &str) -> Result<()> {
        if self.schema_fingerprint != expected {
            return Err(ModelError::FingerprintMismatch {
                expected: expected.to_string(),
                found: self.schema_fingerprint.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    base_margin: f64,
    feature_count: usize,
    schema_fingerprint: String,
    trees: Vec<TreeFile>,
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    nodes: Vec<NodeFile>,
}

#[derive(Serialize, Deserialize)]
struct NodeFile {
    feature: i64,
    threshold: f64,
    left: i64,
    right: i64,
    cover: f64,
    leaf_value: f64,
}

impl From<&TreeNode> for NodeFile {
    fn from(n: &TreeNode) -> Self {
        match n.split {
            None => NodeFile {
                feature: -1,
                threshold: 0.0,
                left: -1,
                right: -1,
                cover: n.cover,
                leaf_value: n.leaf_value,
            },
            Some(f) => NodeFile {
                feature: f as i64,
                threshold: n.threshold,
                left: n.left as i64,
                right: n.right as i64,
                cover: n.cover,
                leaf_value: 0.0,
            },
        }
    }
}

impl NodeFile {
    fn into_node(self, tree: usize, node: usize) -> Result<TreeNode> {
        if self.feature == -1 {
            return Ok(TreeNode::leaf(self.leaf_value, self.cover));
        }
        let index = |v: i64, what: &str| {
            usize::try_from(v).map_err(|_| ModelError::Structure {
                tree,
                node,
                message: format!("negative {what} {v}"),
            })
        };
        Ok(TreeNode::internal(
            index(self.feature, "feature")?,
            self.threshold,
            index(self.left, "left child")?,
            index(self.right, "right child")?,
            self.cover,
        ))
    }
}

/// Largest double below one.
const PROBA_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

/// Numerically stable logistic, clamped to the open interval (0, 1).
pub fn logistic(margin: f64) -> f64 {
    let p = if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, PROBA_CEIL)
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Binary log loss of a margin against a 0/1 label.
pub fn log_loss(margin: f64, label: u8) -> f64 {
    if label == 1 {
        softplus(-margin)
    } else {
        softplus(margin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    pub l2_leaf_reg: f64,
    /// Recorded with the run; exact greedy training has no stochastic step.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_trees: 100,
            max_depth: 3,
            min_samples_leaf: 5,
            learning_rate: 0.1,
            l2_leaf_reg: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.num_trees < 1 {
            return bad("num_trees must be at least 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return bad("l2_leaf_reg must be a non-negative number");
        }
        Ok(())
    }
}

/// Row-major feature matrix with 0/1 labels.
#[derive(Debug, Clone)]
pub struct TrainingData {
    values: Vec<f64>,
    labels: Vec<u8>,
    n_features: usize,
}

impl TrainingData {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = (&'a [f64], u8)>) -> Result<Self> {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut n_features = None;
        for (x, y) in rows {
            let n = *n_features.get_or_insert(x.len());
            if x.len() != n {
                return Err(ModelError::DimensionMismatch {
                    expected: n,
                    got: x.len(),
                });
            }
            if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteInput(i));
            }
            values.extend_from_slice(x);
            labels.push(u8::from(y != 0));
        }
        Ok(Self {
            values,
            labels,
            n_features: n_features.unwrap_or(0),
        })
    }

    /// Both mirrored rows of every sample.
    pub fn from_paired(samples: &[PairedSample]) -> Result<Self> {
        Self::from_rows(samples.iter().flat_map(|s| s.rows()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    fn value(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.n_features + feature]
    }
}

/// Per-round training log loss; entry 0 is the constant initial model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub loss_history: Vec<f64>,
}

pub fn train(data: &TrainingData, config: &TrainConfig) -> Result<TreeEnsemble> {
    train_with_report(data, config).map(|(m, _)| m)
}

pub fn train_with_report(
    data: &TrainingData,
    config: &TrainConfig,
) -> Result<(TreeEnsemble, TrainReport)> {
    config.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let n = data.len();
    let positives = data.labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        return Err(ModelError::SingleClass);
    }
    let mean = positives as f64 / n as f64;
    let base_margin = (mean / (1.0 - mean)).ln();

    let sorted = presort(data);
    let mut margins = vec![base_margin; n];
    let mean_loss = |margins: &[f64]| {
        margins
            .iter()
            .zip(&data.labels)
            .map(|(&m, &y)| log_loss(m, y))
            .sum::<f64>()
            / n as f64
    };
    let mut loss_history = vec![mean_loss(&margins)];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.num_trees);

    for _ in 0..config.num_trees {
        for i in 0..n {
            let p = logistic(margins[i]);
            grad[i] = p - f64::from(data.labels[i]);
            hess[i] = p * (1.0 - p);
        }
        let (tree, leaf_of) = grow_tree(data, &sorted, &grad, &hess, config);
        for (m, &leaf) in margins.iter_mut().zip(&leaf_of) {
            *m += tree.nodes[leaf].leaf_value;
        }
        loss_history.push(mean_loss(&margins));
        trees.push(tree);
    }
    let model = TreeEnsemble::new(trees, base_margin, data.n_features)?;
    Ok((model, TrainReport { loss_history }))
}

/// Row indices per feature, sorted by value then row.
fn presort(data: &TrainingData) -> Vec<Vec<u32>> {
    (0..data.n_features)
        .map(|f| {
            let mut idx: Vec<u32> = (0..data.len() as u32).collect();
            idx.sort_by(|&a, &b| {
                data.value(a as usize, f)
                    .total_cmp(&data.value(b as usize, f))
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect()
}

#[derive(Clone, Copy, Default)]
struct Sums {
    grad: f64,
    hess: f64,
    count: usize,
}

impl Sums {
    fn add(&mut self, g: f64, h: f64) {
        self.grad += g;
        self.hess += h;
        self.count += 1;
    }

    fn minus(&self, other: &Sums) -> Sums {
        Sums {
            grad: self.grad - other.grad,
            hess: self.hess - other.hess,
            count: self.count - other.count,
        }
    }

    fn score(&self, lambda: f64) -> Option<f64> {
        let denom = self.hess + lambda;
        (denom > 0.0).then(|| self.grad * self.grad / denom)
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Level-wise exact greedy growth. Returns the tree and each row's leaf.
fn grow_tree(
    data: &TrainingData,
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    config: &TrainConfig,
) -> (Tree, Vec<usize>) {
    let n = data.len();
    let lambda = config.l2_leaf_reg;
    let mut node_of = vec![0usize; n];
    let mut totals = vec![Sums::default()];
    for i in 0..n {
        totals[0].add(grad[i], hess[i]);
    }
    let mut nodes = vec![TreeNode::leaf(0.0, n as f64)];
    let mut frontier = vec![0usize];

    for _depth in 0..config.max_depth {
        if frontier.is_empty() {
            break;
        }
        // node id -> position in frontier
        let mut slot_of = vec![usize::MAX; nodes.len()];
        for (s, &id) in frontier.iter().enumerate() {
            slot_of[id] = s;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut left = vec![Sums::default(); frontier.len()];
        let mut last = vec![0.0f64; frontier.len()];

        for (f, order) in sorted.iter().enumerate() {
            left.iter_mut().for_each(|s| *s = Sums::default());
            for &r in order {
                let r = r as usize;
                let s = slot_of[node_of[r]];
                if s == usize::MAX {
                    continue;
                }
                let v = data.value(r, f);
                let acc = &mut left[s];
                if acc.count > 0 && v != last[s] {
                    let total = totals[frontier[s]];
                    let right = total.minus(acc);
                    if acc.count >= config.min_samples_leaf && right.count >= config.min_samples_leaf {
                        if let (Some(l), Some(rr), Some(t)) =
                            (acc.score(lambda), right.score(lambda), total.score(lambda))
                        {
                            let gain = 0.5 * (l + rr - t);
                            if gain > MIN_SPLIT_GAIN && best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate {
                                    feature: f,
                                    threshold: midpoint(last[s], v),
                                    gain,
                                });
                            }
                        }
                    }
                }
                acc.add(grad[r], hess[r]);
                last[s] = v;
            }
        }

        let mut next = Vec::new();
        let mut child_of: Vec<Option<(usize, usize)>> = vec![None; nodes.len()];
        for (s, &id) in frontier.iter().enumerate() {
            let Some(c) = best[s] else { continue };
            let l = nodes.len();
            nodes.push(TreeNode::leaf(0.0, 0.0));
            nodes.push(TreeNode::leaf(0.0, 0.0));
            totals.push(Sums::default());
            totals.push(Sums::default());
            nodes[id] = TreeNode::internal(c.feature, c.threshold, l, l + 1, nodes[id].cover);
            child_of[id] = Some((l, l + 1));
            next.push(l);
            next.push(l + 1);
        }
        for r in 0..n {
            let id = node_of[r];
            if let Some((l, rt)) = child_of.get(id).copied().flatten() {
                let node = &nodes[id];
                let child = if data.value(r, node.split.unwrap()) <= node.threshold { l } else { rt };
                node_of[r] = child;
                totals[child].add(grad[r], hess[r]);
            }
        }
        for &id in &next {
            nodes[id].cover = totals[id].count as f64;
        }
        frontier = next;
    }

    for (id, node) in nodes.iter_mut().enumerate() {
        if node.is_leaf() {
            let t = totals[id];
            let denom = t.hess + lambda;
            node.leaf_value = if denom > 0.0 {
                -config.learning_rate * t.grad / denom
            } else {
                0.0
            };
        }
    }
    let tree = Tree::new(nodes).expect("grown tree is well formed");
    (tree, node_of)
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Fraction of rows whose predicted class matches the label; a probability
/// of exactly 0.5 predicts class 1.
pub fn evaluate_accuracy(model: &TreeEnsemble, data: &TrainingData) -> Result<f64> {
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        let predicted = u8::from(model.predict_proba(data.row(i))? >= 0.5);
        if predicted == data.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump(feature: usize, threshold: f64, lo: f64, hi: f64, covers: (f64, f64)) -> Tree {
        Tree::new(vec![
            TreeNode::internal(feature, threshold, 1, 2, covers.0 + covers.1),
            TreeNode::leaf(lo, covers.0),
            TreeNode::leaf(hi, covers.1),
        ])
        .unwrap()
    }

    #[test]
    fn empty_ensemble_returns_base_margin() {
        let m = TreeEnsemble::new(vec![], 0.3, 4).unwrap();
        assert_eq!(m.predict_margin(&[0.0; 4]).unwrap(), 0.3);
    }

    #[test]
    fn stump_routing() {
        let m = TreeEnsemble::new(vec![stump(0, 0.5, -1.0, 1.0, (5.0, 5.0))], 0.25, 2).unwrap();
        assert_eq!(m.predict_margin(&[0.7, 0.0]).unwrap(), 1.25);
        assert_eq!(m.predict_margin(&[0.5, 0.0]).unwrap(), -0.75);
        let a = m.predict_margin(&[0.7, 3.0]).unwrap();
        let b = m.predict_margin(&[0.7, 3.0]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn dimension_mismatch() {
        let m = TreeEnsemble::new(vec![], 0.0, 3).unwrap();
        assert!(matches!(
            m.predict_margin(&[0.0; 2]),
            Err(ModelError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn logistic_saturates_inside_unit_interval() {
        assert_eq!(logistic(0.0), 0.5);
        let hi = logistic(50.0);
        assert!(hi > 1.0 - 1e-15 && hi < 1.0);
        let lo = logistic(-800.0);
        assert!(lo > 0.0);
        for m in [-40.0, -3.3, -0.1, 0.0, 0.2, 7.0, 50.0] {
            let m = TreeEnsemble::new(vec![], m, 1).unwrap();
            let p = m.predict_proba(&[0.0]).unwrap();
            let q = m.predict_proba_loss(&[0.0]).unwrap();
            assert_eq!(p + q, 1.0);
        }
    }

    #[test]
    fn rejects_bad_covers_and_cycles() {
        let bad_cover = Tree::new(vec![
            TreeNode::internal(0, 0.5, 1, 2, 11.0),
            TreeNode::leaf(0.0, 5.0),
            TreeNode::leaf(0.0, 5.0),
        ]);
        assert!(matches!(bad_cover, Err(ModelError::Structure { node: 0, .. })));
        let cycle = Tree::new(vec![
            TreeNode::internal(0, 0.5, 1, 2, 0.0),
            TreeNode::internal(0, 0.5, 0, 2, 0.0),
            TreeNode::leaf(0.0, 0.0),
        ]);
        assert!(cycle.is_err());
        let orphan = Tree::new(vec![TreeNode::leaf(0.0, 1.0), TreeNode::leaf(0.0, 1.0)]);
        assert!(orphan.is_err());
    }

    #[test]
    fn split_feature_must_fit() {
        let err = TreeEnsemble::new(vec![stump(3, 0.5, 0.0, 1.0, (1.0, 1.0))], 0.0, 3);
        assert!(err.is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.num_trees = 0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            learning_rate: 1.5,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            max_depth: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    fn toy() -> TrainingData {
        let rows: Vec<(Vec<f64>, u8)> = (0..40)
            .map(|i| {
                let x0 = (i as f64 - 19.5) / 10.0;
                let x1 = ((i * 7) % 11) as f64;
                (vec![x0, x1], u8::from(x0 > 0.0))
            })
            .collect();
        TrainingData::from_rows(rows.iter().map(|(x, y)| (x.as_slice(), *y))).unwrap()
    }

    #[test]
    fn separable_toy_is_fit() {
        let cfg = TrainConfig {
            num_trees: 10,
            max_depth: 2,
            min_samples_leaf: 1,
            learning_rate: 0.3,
            ..TrainConfig::default()
        };
        let model = train(&toy(), &cfg).unwrap();
        assert_eq!(evaluate_accuracy(&model, &toy()).unwrap(), 1.0);
    }

    #[test]
    fn training_errors() {
        let one = TrainingData::from_rows([(&[1.0][..], 1u8), (&[2.0][..], 1u8)]).unwrap();
        assert!(matches!(train(&one, &TrainConfig::default()), Err(ModelError::SingleClass)));
        let empty = TrainingData::from_rows(std::iter::empty()).unwrap();
        assert!(matches!(
            train(&empty, &TrainConfig::default()),
            Err(ModelError::EmptyTrainingSet)
        ));
        let cfg = TrainConfig {
            num_trees: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&toy(), &cfg), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn base_margin_is_label_log_odds() {
        let data = TrainingData::from_rows([
            (&[0.0][..], 1u8),
            (&[1.0][..], 1u8),
            (&[2.0][..], 1u8),
            (&[3.0][..], 0u8),
        ])
        .unwrap();
        let model = train(&data, &TrainConfig::default()).unwrap();
        assert!((model.base_margin() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn accuracy_edge_cases() {
        let confident = TreeEnsemble::new(vec![], 2.2, 1).unwrap();
        let all_one = TrainingData::from_rows([(&[0.0][..], 1u8), (&[5.0][..], 1u8)]).unwrap();
        assert_eq!(evaluate_accuracy(&confident, &all_one).unwrap(), 1.0);
        let tie = TreeEnsemble::new(vec![], 0.0, 1).unwrap();
        let mixed = TrainingData::from_rows([
            (&[0.0][..], 1u8),
            (&[0.0][..], 0u8),
            (&[0.0][..], 0u8),
            (&[0.0][..], 1u8),
            (&[0.0][..], 1u8),
        ])
        .unwrap();
        assert!((evaluate_accuracy(&tie, &mixed).unwrap() - 0.6).abs() < 1e-15);
        let empty = TrainingData::from_rows(std::iter::empty()).unwrap();
        assert!(evaluate_accuracy(&tie, &empty).is_err());
    }
}
