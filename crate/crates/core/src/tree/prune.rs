//! Pessimistic-error subtree replacement.

use statrs::distribution::{ContinuousCDF, Normal};

use super::{argmax, DecisionTree, NodeId, TreeNode, TreeParams};
use crate::scalar::Scalar;

/// Extra errors added to `errors` observed among `n` (weighted) instances
/// so that `errors + extra` is the upper confidence limit of the binomial
/// error count at `confidence`.
///
/// Confidence values above 0.5 leave the estimate unmodified (extra = 0).
pub fn pessimistic_extra_errors(n: f64, errors: f64, confidence: f64) -> f64 {
    if confidence > 0.5 || n <= 0.0 {
        return 0.0;
    }
    if errors < 1.0 {
        // exact for zero errors, then interpolated linearly up to one error
        let base = n * (1.0 - confidence.powf(1.0 / n));
        if errors == 0.0 {
            return base;
        }
        return base + errors * (pessimistic_extra_errors(n, 1.0, confidence) - base);
    }
    if errors + 0.5 >= n {
        return (n - errors).max(0.0);
    }
    let z = Normal::standard().inverse_cdf(1.0 - confidence);
    let f = (errors + 0.5) / n;
    let z2 = z * z;
    let r = (f + z2 / (2.0 * n) + z * (f / n - f * f / n + z2 / (4.0 * n * n)).sqrt()) / (1.0 + z2 / n);
    r * n - errors
}

fn leaf_estimate<F: Scalar>(distribution: &[F], confidence: f64) -> f64 {
    let n: f64 = distribution.iter().map(|d| d.to_f64_lossy()).sum();
    let best = distribution[argmax(distribution)].to_f64_lossy();
    let errors = (n - best).max(0.0);
    errors + pessimistic_extra_errors(n, errors, confidence)
}

/// Replaces, bottom-up, every subtree whose estimated error is not clearly
/// below the estimate for a single leaf in its place. Never adds nodes.
pub fn prune<F: Scalar>(tree: &DecisionTree<F>, params: &TreeParams) -> DecisionTree<F> {
    let mut nodes = tree.nodes.clone();
    prune_node(&mut nodes, 0, params.confidence_factor);
    let mut pruned = tree.clone();
    pruned.nodes = compact(&nodes);
    pruned
}

fn prune_node<F: Scalar>(nodes: &mut [TreeNode<F>], id: NodeId, confidence: f64) -> f64 {
    let children = match &nodes[id] {
        TreeNode::Leaf { distribution, .. } => return leaf_estimate(distribution, confidence),
        TreeNode::Split { children, .. } => children.clone(),
    };
    let subtree: f64 = children
        .iter()
        .map(|&c| prune_node(nodes, c, confidence))
        .sum();
    let distribution = nodes[id].distribution().to_vec();
    let as_leaf = leaf_estimate(&distribution, confidence);
    if as_leaf <= subtree + 0.1 {
        nodes[id] = TreeNode::Leaf {
            prediction: argmax(&distribution),
            distribution,
        };
        as_leaf
    } else {
        subtree
    }
}

/// Drops nodes no longer reachable from the root and renumbers in preorder.
fn compact<F: Scalar>(nodes: &[TreeNode<F>]) -> Vec<TreeNode<F>> {
    fn visit<F: Scalar>(nodes: &[TreeNode<F>], id: NodeId, out: &mut Vec<TreeNode<F>>) -> NodeId {
        let new_id = out.len();
        out.push(nodes[id].clone());
        if let TreeNode::Split { children, .. } = &nodes[id] {
            let remapped: Vec<NodeId> = children.iter().map(|&c| visit(nodes, c, out)).collect();
            if let TreeNode::Split { children, .. } = &mut out[new_id] {
                *children = remapped;
            }
        }
        new_id
    }
    let mut out = Vec::new();
    visit(nodes, 0, &mut out);
    out
}
