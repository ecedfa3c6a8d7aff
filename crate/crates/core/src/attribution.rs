//! Exact Shapley values of a tree ensemble's margin.
//!
//! The coalition value `v(S)` is the cover-weighted conditional expectation
//! of the margin: at a split on a feature in `S` follow `x`, otherwise
//! average both children by their covers. [`tree_shap`] computes the exact
//! Shapley values of this game in `O(T L D^2)` with the path-extension
//! recursion; [`brute_force_shapley`] enumerates all coalitions and serves
//! as the reference.

use std::io::Write;

use rayon::prelude::*;

use crate::model::{ModelError, Tree, TreeEnsemble};

/// Coalition enumeration limit for [`brute_force_shapley`].
pub const BRUTE_FORCE_MAX_FEATURES: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum AttributionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tree {tree}, node {node}: internal node has zero cover")]
    ZeroCover { tree: usize, node: usize },
    #[error("brute-force enumeration supports at most {max} features, model has {got}")]
    TooManyFeatures { got: usize, max: usize },
    #[error("coalition mask covers {got} features, model has {expected}")]
    MaskSize { expected: usize, got: usize },
    #[error("sample `{sample_id}`: {source}")]
    Sample {
        sample_id: String,
        #[source]
        source: Box<AttributionError>,
    },
}

pub type Result<T> = std::result::Result<T, AttributionError>;

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionVector {
    pub sample_id: String,
    /// One Shapley value per feature, in margin (log-odds) units.
    pub phi: Vec<f64>,
    /// `v(∅)`: expected margin under the covers.
    pub baseline: f64,
}

impl AttributionVector {
    /// `baseline + Σ phi`, which equals the margin by efficiency.
    pub fn total(&self) -> f64 {
        self.baseline + self.phi.iter().sum::<f64>()
    }
}

/// Set of present features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoalitionMask {
    words: Vec<u64>,
    len: usize,
}

impl CoalitionMask {
    pub fn empty(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut m = Self::empty(len);
        (0..len).for_each(|i| m.insert(i));
        m
    }

    /// Low `len` bits of `bits` as a mask (`len <= 64`).
    pub fn from_bits(bits: u64, len: usize) -> Self {
        assert!(len <= 64);
        let mut m = Self::empty(len);
        if len > 0 {
            m.words[0] = if len == 64 { bits } else { bits & ((1u64 << len) - 1) };
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "feature {i} outside mask of {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.len);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

fn check_covers(model: &TreeEnsemble) -> Result<()> {
    for (t, tree) in model.trees().iter().enumerate() {
        if let Some(node) = tree
            .nodes()
            .iter()
            .position(|n| !n.is_leaf() && n.cover <= 0.0)
        {
            return Err(AttributionError::ZeroCover { tree: t, node });
        }
    }
    Ok(())
}

fn tree_expectation(tree: &Tree, x: &[f64], present: &impl Fn(usize) -> bool, id: usize) -> f64 {
    let node = &tree.nodes()[id];
    let Some(f) = node.split else {
        return node.leaf_value;
    };
    if present(f) {
        let next = if x[f] <= node.threshold { node.left } else { node.right };
        tree_expectation(tree, x, present, next)
    } else {
        let (l, r) = (&tree.nodes()[node.left], &tree.nodes()[node.right]);
        (l.cover * tree_expectation(tree, x, present, node.left)
            + r.cover * tree_expectation(tree, x, present, node.right))
            / node.cover
    }
}

fn expvalue_with(model: &TreeEnsemble, x: &[f64], present: impl Fn(usize) -> bool) -> f64 {
    model
        .trees()
        .iter()
        .fold(model.base_margin(), |acc, t| acc + tree_expectation(t, x, &present, 0))
}

/// `v(S)`: the margin with features outside `S` marginalized by covers.
pub fn expvalue(model: &TreeEnsemble, x: &[f64], coalition: &CoalitionMask) -> Result<f64> {
    model.check_input(x)?;
    if coalition.len() != model.feature_count() {
        return Err(AttributionError::MaskSize {
            expected: model.feature_count(),
            got: coalition.len(),
        });
    }
    check_covers(model)?;
    Ok(expvalue_with(model, x, |f| coalition.contains(f)))
}

/// `v(∅)`, the expected margin.
pub fn baseline(model: &TreeEnsemble) -> Result<f64> {
    check_covers(model)?;
    Ok(expvalue_with(model, &vec![0.0; model.feature_count()], |_| false))
}

/// Shapley values by enumerating every coalition of the `n` features.
pub fn brute_force_shapley(model: &TreeEnsemble, x: &[f64]) -> Result<AttributionVector> {
    let n = model.feature_count();
    if n > BRUTE_FORCE_MAX_FEATURES {
        return Err(AttributionError::TooManyFeatures {
            got: n,
            max: BRUTE_FORCE_MAX_FEATURES,
        });
    }
    model.check_input(x)?;
    check_covers(model)?;

    let values: Vec<f64> = (0u64..1 << n)
        .map(|bits| expvalue_with(model, x, |f| bits & (1 << f) != 0))
        .collect();
    // |S|! (n-1-|S|)! / n! = 1 / (n * C(n-1, |S|))
    let weights: Vec<f64> = (0..n)
        .map(|s| 1.0 / (n as f64 * binomial(n.saturating_sub(1), s) as f64))
        .collect();
    let mut phi = vec![0.0; n];
    for (bits, &v) in values.iter().enumerate() {
        let size = (bits as u64).count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if bits & (1 << i) == 0 {
                *p += weights[size] * (values[bits | (1 << i)] - v);
            }
        }
    }
    Ok(AttributionVector {
        sample_id: String::new(),
        phi,
        baseline: values[0],
    })
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

#[derive(Clone, Copy, Default)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

/// Appends a feature to the path and updates the subset-size weights.
fn extend_path(path: &mut [PathElement], depth: usize, zero: f64, one: f64, feature: usize) {
    path[depth] = PathElement {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    };
    let d = depth as f64;
    for i in (0..depth).rev() {
        let w = path[i].weight;
        path[i + 1].weight += one * w * (i as f64 + 1.0) / (d + 1.0);
        path[i].weight = zero * w * (d - i as f64) / (d + 1.0);
    }
}

/// Inverse of [`extend_path`] for the element at `index`.
fn unwind_path(path: &mut [PathElement], depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d = depth as f64;
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * (d + 1.0) / ((i as f64 + 1.0) * one);
            next = tmp - path[i].weight * zero * (d - i as f64) / (d + 1.0);
        } else {
            path[i].weight = path[i].weight * (d + 1.0) / (zero * (d - i as f64));
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

/// Total path weight if the element at `index` were unwound.
fn unwound_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d = depth as f64;
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next * (d + 1.0) / ((i as f64 + 1.0) * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (d - i as f64) / (d + 1.0);
        } else {
            total += path[i].weight * (d + 1.0) / (zero * (d - i as f64));
        }
    }
    total
}

struct TreeShapState<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    /// Per-tree contributions, indexed by feature.
    phi: &'a mut [f64],
    touched: &'a mut Vec<usize>,
}

impl TreeShapState<'_> {
    fn add(&mut self, feature: usize, value: f64) {
        if self.phi[feature] == 0.0 && !self.touched.contains(&feature) {
            self.touched.push(feature);
        }
        self.phi[feature] += value;
    }

    /// `buf` holds the parent path in `buf[..depth]` (for `depth > 0`);
    /// this call copies it forward and extends it.
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        node: usize,
        buf: &mut [PathElement],
        depth: usize,
        zero: f64,
        one: f64,
        feature: usize,
    ) {
        let (parent, rest) = buf.split_at_mut(depth);
        rest[..depth].copy_from_slice(parent);
        let path = rest;
        let mut depth = depth;
        extend_path(path, depth, zero, one, feature);

        let tree = self.tree;
        let n = &tree.nodes()[node];
        let Some(split) = n.split else {
            for i in 1..=depth {
                let w = unwound_sum(path, depth, i);
                let el = path[i];
                self.add(el.feature, w * (el.one_fraction - el.zero_fraction) * n.leaf_value);
            }
            return;
        };

        let (hot, cold) = if self.x[split] <= n.threshold {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        let mut incoming_zero = 1.0;
        let mut incoming_one = 1.0;
        if let Some(k) = (1..=depth).find(|&k| path[k].feature == split) {
            incoming_zero = path[k].zero_fraction;
            incoming_one = path[k].one_fraction;
            unwind_path(path, depth, k);
            depth -= 1;
        }
        let nodes = tree.nodes();
        let hot_zero = nodes[hot].cover / n.cover * incoming_zero;
        let cold_zero = nodes[cold].cover / n.cover * incoming_zero;
        // a branch with both fractions zero carries no weight
        if hot_zero != 0.0 || incoming_one != 0.0 {
            self.recurse(hot, path, depth + 1, hot_zero, incoming_one, split);
        }
        if cold_zero != 0.0 {
            self.recurse(cold, path, depth + 1, cold_zero, 0.0, split);
        }
    }
}

/// Exact Shapley values of `v(S)` via the polynomial-time path recursion.
pub fn tree_shap(model: &TreeEnsemble, x: &[f64]) -> Result<AttributionVector> {
    model.check_input(x)?;
    check_covers(model)?;
    let n = model.feature_count();
    let mut phi = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut touched = Vec::new();
    let max_len = model.max_depth() + 2;
    let mut buf = vec![PathElement::default(); max_len * (max_len + 1) / 2 + max_len];
    let mut baseline = model.base_margin();

    for tree in model.trees() {
        baseline += tree_expectation(tree, x, &|_| false, 0);
        let mut state = TreeShapState {
            tree,
            x,
            phi: &mut scratch,
            touched: &mut touched,
        };
        state.recurse(0, &mut buf, 0, 1.0, 1.0, usize::MAX);
        // per-tree totals are added whole so mirrored trees give bitwise-equal sums
        for &f in touched.iter() {
            phi[f] += scratch[f];
            scratch[f] = 0.0;
        }
        touched.clear();
    }
    Ok(AttributionVector {
        sample_id: String::new(),
        phi,
        baseline,
    })
}

/// [`tree_shap`] over many inputs, in parallel, preserving order.
pub fn batch_attribute<S, X>(model: &TreeEnsemble, samples: &[(S, X)]) -> Result<Vec<AttributionVector>>
where
    S: AsRef<str> + Sync,
    X: AsRef<[f64]> + Sync,
{
    samples
        .par_iter()
        .map(|(id, x)| {
            let id = id.as_ref();
            tree_shap(model, x.as_ref())
                .map(|mut a| {
                    a.sample_id = id.to_string();
                    a
                })
                .map_err(|e| AttributionError::Sample {
                    sample_id: id.to_string(),
                    source: Box::new(e),
                })
        })
        .collect()
}

/// CSV `sample_id,baseline,phi_1,...,phi_n`; every vector must have the
/// same length.
pub fn write_attributions<W: Write>(writer: W, attributions: &[AttributionVector]) -> csv::Result<()> {
    let n = attributions.first().map_or(0, |a| a.phi.len());
    let mut wtr = csv::Writer::from_writer(writer);
    let header = ["sample_id".to_string(), "baseline".to_string()]
        .into_iter()
        .chain((1..=n).map(|i| format!("phi_{i}")));
    wtr.write_record(header)?;
    for a in attributions {
        let row = [a.sample_id.clone(), a.baseline.to_string()]
            .into_iter()
            .chain(a.phi.iter().map(f64::to_string));
        wtr.write_record(row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TreeNode;

    fn stump(feature: usize, thr: f64, lo: f64, hi: f64, covers: (f64, f64)) -> Tree {
        Tree::new(vec![
            TreeNode::internal(feature, thr, 1, 2, covers.0 + covers.1),
            TreeNode::leaf(lo, covers.0),
            TreeNode::leaf(hi, covers.1),
        ])
        .unwrap()
    }

    fn single_stump() -> TreeEnsemble {
        TreeEnsemble::new(vec![stump(0, 0.5, 0.2, 0.8, (50.0, 50.0))], 0.0, 3).unwrap()
    }

    #[test]
    fn expvalue_stump() {
        let m = single_stump();
        let x = [0.7, 0.0, 0.0];
        let empty = expvalue(&m, &x, &CoalitionMask::empty(3)).unwrap();
        assert!((empty - 0.5).abs() < 1e-15);
        let with0 = expvalue(&m, &x, &CoalitionMask::from_bits(0b001, 3)).unwrap();
        assert_eq!(with0, 0.8);
        let full = expvalue(&m, &x, &CoalitionMask::full(3)).unwrap();
        assert_eq!(full, m.predict_margin(&x).unwrap());
    }

    #[test]
    fn zero_cover_is_an_error() {
        let t = Tree::new(vec![
            TreeNode::internal(0, 0.5, 1, 2, 0.0),
            TreeNode::leaf(1.0, 0.0),
            TreeNode::leaf(2.0, 0.0),
        ])
        .unwrap();
        let m = TreeEnsemble::new(vec![t], 0.0, 1).unwrap();
        assert!(matches!(
            expvalue(&m, &[0.0], &CoalitionMask::empty(1)),
            Err(AttributionError::ZeroCover { tree: 0, node: 0 })
        ));
        assert!(tree_shap(&m, &[0.0]).is_err());
    }

    #[test]
    fn constant_model_has_zero_attribution() {
        let m = TreeEnsemble::new(vec![], 0.4, 4).unwrap();
        let a = brute_force_shapley(&m, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.phi, vec![0.0; 4]);
        assert_eq!(a.baseline, 0.4);
        let b = tree_shap(&m, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(b.phi, vec![0.0; 4]);
    }

    #[test]
    fn stump_attribution_goes_to_its_feature() {
        let m = single_stump();
        let x = [0.7, 9.0, -2.0];
        let margin = m.predict_margin(&x).unwrap();
        let brute = brute_force_shapley(&m, &x).unwrap();
        // v({0}) - v(∅) for both orderings
        assert!((brute.phi[0] - (margin - brute.baseline)).abs() < 1e-15);
        assert_eq!(&brute.phi[1..], &[0.0, 0.0]);
        let fast = tree_shap(&m, &x).unwrap();
        assert!((fast.phi[0] - 0.3).abs() < 1e-15);
        assert_eq!(&fast.phi[1..], &[0.0, 0.0]);
    }

    #[test]
    fn mirrored_stumps_are_symmetric() {
        let m = TreeEnsemble::new(
            vec![stump(0, 0.5, -1.0, 2.0, (3.0, 7.0)), stump(1, 0.5, -1.0, 2.0, (3.0, 7.0))],
            0.1,
            2,
        )
        .unwrap();
        let x = [0.9, 0.9];
        let brute = brute_force_shapley(&m, &x).unwrap();
        assert_eq!(brute.phi[0], brute.phi[1]);
        let fast = tree_shap(&m, &x).unwrap();
        assert_eq!(fast.phi[0].to_bits(), fast.phi[1].to_bits());
    }

    #[test]
    fn repeated_feature_on_path() {
        // root and child both split on feature 0, then feature 1
        let t = Tree::new(vec![
            TreeNode::internal(0, 0.5, 1, 2, 10.0),
            TreeNode::internal(0, 0.2, 3, 4, 6.0),
            TreeNode::internal(1, 0.3, 5, 6, 4.0),
            TreeNode::leaf(-1.0, 2.0),
            TreeNode::leaf(0.5, 4.0),
            TreeNode::leaf(1.5, 1.0),
            TreeNode::leaf(3.0, 3.0),
        ])
        .unwrap();
        let m = TreeEnsemble::new(vec![t], 0.0, 2).unwrap();
        for x in [[0.1, 0.1], [0.3, 0.9], [0.7, 0.1], [0.7, 0.7]] {
            let b = brute_force_shapley(&m, &x).unwrap();
            let f = tree_shap(&m, &x).unwrap();
            for i in 0..2 {
                assert!((b.phi[i] - f.phi[i]).abs() < 1e-12, "{x:?}: {b:?} vs {f:?}");
            }
            assert!((f.total() - m.predict_margin(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_guard() {
        let m = TreeEnsemble::new(vec![], 0.0, 21).unwrap();
        assert!(matches!(
            brute_force_shapley(&m, &[0.0; 21]),
            Err(AttributionError::TooManyFeatures { got: 21, .. })
        ));
    }

    #[test]
    fn batch_matches_single_calls() {
        let m = single_stump();
        let rows = vec![
            ("a".to_string(), vec![0.7, 0.0, 0.0]),
            ("b".to_string(), vec![0.1, 0.0, 0.0]),
        ];
        let out = batch_attribute(&m, &rows).unwrap();
        assert_eq!(out[0].sample_id, "a");
        assert_eq!(out[1].phi, tree_shap(&m, &rows[1].1).unwrap().phi);
        let bad = vec![("z".to_string(), vec![0.0; 2])];
        match batch_attribute(&m, &bad) {
            Err(AttributionError::Sample { sample_id, .. }) => assert_eq!(sample_id, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn attribution_dump() {
        let a = AttributionVector {
            sample_id: "g1#1".into(),
            phi: vec![0.25, -1.0],
            baseline: 0.5,
        };
        let mut buf = Vec::new();
        write_attributions(&mut buf, &[a]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "sample_id,baseline,phi_1,phi_2\ng1#1,0.5,0.25,-1\n"
        );
    }

    #[test]
    fn mask_bits() {
        let mut m = CoalitionMask::empty(70);
        m.insert(0);
        m.insert(69);
        assert!(m.contains(69) && !m.contains(68));
        assert_eq!(m.count(), 2);
        m.remove(0);
        assert_eq!(m.count(), 1);
        assert_eq!(CoalitionMask::from_bits(0b111, 2).count(), 2);
    }
}
