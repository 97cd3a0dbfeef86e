//! C4.5-style decision trees.
//!
//! Trees are stored as a flat arena in preorder (root at index 0, children
//! always after their parent). The serialized form is the same flat list of
//! node records, wrapped in a versioned document:
//!
//! ```json
//! { "format": "drivid-tree", "version": 1,
//!   "features": [...], "classes": ["0", "1"], "params": {...},
//!   "nodes": [
//!     { "kind": "split", "test": { "kind": "threshold", "feature": 0, "threshold": 50.5 },
//!       "children": [1, 2], "known_fractions": [0.5, 0.5], "distribution": [10.0, 10.0] },
//!     { "kind": "leaf", "prediction": 0, "distribution": [10.0, 0.0] },
//!     { "kind": "leaf", "prediction": 1, "distribution": [0.0, 10.0] } ] }
//! ```

mod prune;
mod train;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureDescriptor, FeatureKind, Interaction, Value};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use prune::{pessimistic_extra_errors, prune};
pub(crate) use train::{grow, FeatureSampler};

pub const TREE_FORMAT: &str = "drivid-tree";
pub const TREE_FORMAT_VERSION: u32 = 1;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub min_leaf_instances: usize,
    pub confidence_factor: f64,
    pub pruning_enabled: bool,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    /// J48 defaults: 2 instances per leaf, confidence 0.25, pruning on.
    fn default() -> Self {
        TreeParams {
            min_leaf_instances: 2,
            confidence_factor: 0.25,
            pruning_enabled: true,
            max_depth: None,
        }
    }
}

impl TreeParams {
    pub fn unpruned() -> Self {
        TreeParams {
            pruning_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_leaf_instances == 0 {
            return Err(Error::InvalidParameter("min_leaf_instances must be >= 1".into()));
        }
        if !(self.confidence_factor > 0.0 && self.confidence_factor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence_factor must be in (0, 1), got {}",
                self.confidence_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Test<F> {
    /// Branch 0 when `x <= threshold`, branch 1 otherwise.
    Threshold { feature: usize, threshold: F },
    /// One branch per listed category.
    Categorical { feature: usize, values: Vec<u32> },
}

impl<F: Scalar> Test<F> {
    pub fn feature(&self) -> usize {
        match self {
            Test::Threshold { feature, .. } | Test::Categorical { feature, .. } => *feature,
        }
    }

    /// Branch taken by `value`, or `None` if the value is missing or a
    /// category this test has no branch for.
    pub fn branch(&self, value: &Value<F>) -> Option<usize> {
        match (self, value) {
            (Test::Threshold { threshold, .. }, Value::Num(x)) => {
                Some(if *x <= *threshold { 0 } else { 1 })
            }
            (Test::Categorical { values, .. }, Value::Cat(c)) => {
                values.iter().position(|v| v == c)
            }
            _ => None,
        }
    }

    fn n_branches(&self) -> usize {
        match self {
            Test::Threshold { .. } => 2,
            Test::Categorical { values, .. } => values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode<F> {
    Leaf {
        prediction: usize,
        distribution: Vec<F>,
    },
    Split {
        test: Test<F>,
        children: Vec<NodeId>,
        /// Share of the node's known-valued training weight that went down
        /// each branch; instances missing the tested value follow all
        /// branches with these weights.
        known_fractions: Vec<F>,
        distribution: Vec<F>,
    },
}

impl<F: Scalar> TreeNode<F> {
    pub fn distribution(&self) -> &[F] {
        match self {
            TreeNode::Leaf { distribution, .. } | TreeNode::Split { distribution, .. } => {
                distribution
            }
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }
}

/// Index of the largest entry; the first one on ties.
pub(crate) fn argmax<F: Scalar>(xs: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Prediction with the per-class weight it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<F> {
    pub class: usize,
    pub confidence: F,
    pub class_weights: Vec<F>,
}

impl<F: Scalar> Prediction<F> {
    pub(crate) fn from_weights(class_weights: Vec<F>) -> Self {
        let class = argmax(&class_weights);
        let total: F = class_weights.iter().copied().sum();
        let confidence = if total > F::zero() {
            class_weights[class] / total
        } else {
            F::zero()
        };
        Prediction {
            class,
            confidence,
            class_weights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<F> {
    format: String,
    version: u32,
    features: Vec<FeatureDescriptor>,
    classes: Vec<String>,
    params: TreeParams,
    nodes: Vec<TreeNode<F>>,
}

impl<F: Scalar> DecisionTree<F> {
    pub(crate) fn from_parts(
        features: Vec<FeatureDescriptor>,
        classes: Vec<String>,
        params: TreeParams,
        nodes: Vec<TreeNode<F>>,
    ) -> Self {
        DecisionTree {
            format: TREE_FORMAT.to_string(),
            version: TREE_FORMAT_VERSION,
            features,
            classes,
            params,
            nodes,
        }
    }

    pub fn features(&self) -> &[FeatureDescriptor] {
        &self.features
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn nodes(&self) -> &[TreeNode<F>] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode<F> {
        &self.nodes[0]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (id, node) in self.nodes.iter().enumerate() {
            max = max.max(depth[id]);
            if let TreeNode::Split { children, .. } = node {
                for &c in children {
                    depth[c] = depth[id] + 1;
                }
            }
        }
        max
    }

    /// Routes `values` to the leaves; missing values split the instance
    /// across all branches by the training known fractions.
    pub fn class_weights(&self, values: &[Value<F>]) -> Result<Vec<F>> {
        if values.len() != self.features.len() {
            return Err(Error::Schema(format!(
                "instance has {} values, tree expects {}",
                values.len(),
                self.features.len()
            )));
        }
        let mut out = vec![F::zero(); self.classes.len()];
        let mut stack = vec![(0usize, F::one())];
        while let Some((id, w)) = stack.pop() {
            match &self.nodes[id] {
                TreeNode::Leaf {
                    prediction,
                    distribution,
                } => {
                    let total: F = distribution.iter().copied().sum();
                    if total > F::zero() {
                        for (o, &d) in out.iter_mut().zip(distribution) {
                            *o = *o + w * d / total;
                        }
                    } else {
                        out[*prediction] = out[*prediction] + w;
                    }
                }
                TreeNode::Split {
                    test,
                    children,
                    known_fractions,
                    ..
                } => match test.branch(&values[test.feature()]) {
                    Some(b) => stack.push((children[b], w)),
                    None => {
                        for (&c, &f) in children.iter().zip(known_fractions).rev() {
                            if f > F::zero() {
                                stack.push((c, w * f));
                            }
                        }
                    }
                },
            }
        }
        Ok(out)
    }

    pub fn predict(&self, values: &[Value<F>]) -> Result<Prediction<F>> {
        Ok(Prediction::from_weights(self.class_weights(values)?))
    }

    /// Predicted class label and its confidence.
    pub fn predict_label(&self, inst: &Interaction<F>) -> Result<(&str, F)> {
        let p = self.predict(&inst.values)?;
        Ok((&self.classes[p.class], p.confidence))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: DecisionTree<F> = serde_json::from_str(text)?;
        tree.check()?;
        Ok(tree)
    }

    /// Structural validation of a loaded document.
    pub(crate) fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format(m));
        if self.format != TREE_FORMAT {
            return bad(format!("expected format `{TREE_FORMAT}`, found `{}`", self.format));
        }
        if self.version != TREE_FORMAT_VERSION {
            return bad(format!("unsupported tree format version {}", self.version));
        }
        if self.nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        let k = self.classes.len();
        let mut parents = vec![0usize; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if node.distribution().len() != k {
                return bad(format!("node {id}: distribution length != class count"));
            }
            match node {
                TreeNode::Leaf { prediction, .. } if *prediction >= k => {
                    return bad(format!("node {id}: prediction out of range"));
                }
                TreeNode::Leaf { .. } => {}
                TreeNode::Split {
                    test,
                    children,
                    known_fractions,
                    ..
                } => {
                    let f = test.feature();
                    let Some(desc) = self.features.get(f) else {
                        return bad(format!("node {id}: feature {f} out of range"));
                    };
                    let kind_ok = matches!(
                        (test, desc.kind),
                        (Test::Threshold { .. }, FeatureKind::Numeric)
                            | (Test::Categorical { .. }, FeatureKind::Categorical)
                    );
                    if !kind_ok {
                        return bad(format!("node {id}: test does not match feature kind"));
                    }
                    if children.len() != test.n_branches()
                        || known_fractions.len() != children.len()
                        || children.len() < 2
                    {
                        return bad(format!("node {id}: branch count mismatch"));
                    }
                    for &c in children {
                        if c <= id || c >= self.nodes.len() {
                            return bad(format!("node {id}: child {c} out of order"));
                        }
                        parents[c] += 1;
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return bad("nodes do not form a single tree".into());
        }
        Ok(())
    }
}

/// Trains a C4.5 tree on every predictor of `training`, pruning it when
/// `params.pruning_enabled`.
pub fn train_c45<F: Scalar>(training: &Dataset<F>, params: &TreeParams) -> Result<DecisionTree<F>> {
    params.validate()?;
    training.require_trainable()?;
    let rows: Vec<(usize, F)> = (0..training.len()).map(|p| (p, F::one())).collect();
    let tree = grow(training, rows, params, None::<FeatureSampler<'_, rand_chacha::ChaCha8Rng>>);
    Ok(if params.pruning_enabled {
        prune(&tree, params)
    } else {
        tree
    })
}
