use std::collections::BTreeMap;

use rand::Rng;

use super::{argmax, DecisionTree, NodeId, Test, TreeNode, TreeParams};
use crate::data::{Dataset, FeatureKind, Value};
use crate::info_theory::{
    best_threshold_split, conditional_entropy, entropy, gain_ratio_with_missing, min_gain, GainRatio,
    Partition, WeightedPoint,
};
use crate::scalar::Scalar;

/// Per-node random feature subsets (random forest mode).
pub(crate) struct FeatureSampler<'r, R: Rng> {
    pub rng: &'r mut R,
    pub per_node: usize,
}

impl<R: Rng> FeatureSampler<'_, R> {
    /// A random order of all features: the first `per_node` (sorted) form
    /// the candidate subset, the rest are fallbacks tried one at a time
    /// when no candidate yields a usable test.
    fn draw(&mut self, n_features: usize) -> (Vec<usize>, Vec<usize>) {
        let mut order = rand::seq::index::sample(self.rng, n_features, n_features).into_vec();
        let rest = order.split_off(self.per_node.min(n_features));
        order.sort_unstable();
        (order, rest)
    }
}

struct Candidate<F> {
    test: Test<F>,
    gain_ratio: F,
}

struct Grower<'a, 'r, F, R: Rng> {
    data: &'a Dataset<F>,
    n_classes: usize,
    min_leaf: F,
    max_depth: Option<usize>,
    sampler: Option<FeatureSampler<'r, R>>,
    nodes: Vec<TreeNode<F>>,
    used_categorical: Vec<bool>,
}

/// Grows an unpruned tree from `(row position, weight)` pairs.
pub(crate) fn grow<F: Scalar, R: Rng>(
    data: &Dataset<F>,
    rows: Vec<(usize, F)>,
    params: &TreeParams,
    sampler: Option<FeatureSampler<'_, R>>,
) -> DecisionTree<F> {
    let mut g = Grower {
        data,
        n_classes: data.classes().len(),
        min_leaf: F::from_count(params.min_leaf_instances),
        max_depth: params.max_depth,
        sampler,
        nodes: Vec::new(),
        used_categorical: vec![false; data.n_predictors()],
    };
    g.grow(rows, 0);
    DecisionTree::from_parts(
        data.schema().to_vec(),
        data.classes().to_vec(),
        *params,
        g.nodes,
    )
}

impl<F: Scalar, R: Rng> Grower<'_, '_, F, R> {
    fn distribution(&self, rows: &[(usize, F)]) -> Vec<F> {
        let mut d = vec![F::zero(); self.n_classes];
        for &(p, w) in rows {
            let c = self.data.instances()[p].class;
            d[c] = d[c] + w;
        }
        d
    }

    fn grow(&mut self, rows: Vec<(usize, F)>, depth: usize) -> NodeId {
        let distribution = self.distribution(&rows);
        let total: F = distribution.iter().copied().sum();
        let id = self.nodes.len();
        let leaf = TreeNode::Leaf {
            prediction: argmax(&distribution),
            distribution: distribution.clone(),
        };
        self.nodes.push(leaf);

        let pure = distribution.iter().filter(|&&c| c > F::zero()).count() <= 1;
        let too_small = total < self.min_leaf + self.min_leaf;
        let too_deep = self.max_depth.is_some_and(|d| depth >= d);
        if pure || too_small || too_deep {
            return id;
        }
        let Some(best) = self.best_test(&rows, &distribution, total) else {
            return id;
        };

        let feature = best.test.feature();
        let n_branches = match &best.test {
            Test::Threshold { .. } => 2,
            Test::Categorical { values, .. } => values.len(),
        };
        let mut branches: Vec<Vec<(usize, F)>> = vec![Vec::new(); n_branches];
        let mut known_w = vec![F::zero(); n_branches];
        let mut missing = Vec::new();
        for &(p, w) in &rows {
            match best.test.branch(&self.data.instances()[p].values[feature]) {
                Some(b) => {
                    branches[b].push((p, w));
                    known_w[b] = known_w[b] + w;
                }
                None => missing.push((p, w)),
            }
        }
        let known_total: F = known_w.iter().copied().sum();
        let known_fractions: Vec<F> = known_w.iter().map(|&w| w / known_total).collect();
        for (branch, &frac) in branches.iter_mut().zip(&known_fractions) {
            branch.extend(missing.iter().map(|&(p, w)| (p, w * frac)));
        }

        let is_categorical = matches!(best.test, Test::Categorical { .. });
        if is_categorical {
            self.used_categorical[feature] = true;
        }
        drop(rows);
        let children = branches
            .into_iter()
            .map(|b| self.grow(b, depth + 1))
            .collect();
        if is_categorical {
            self.used_categorical[feature] = false;
        }
        self.nodes[id] = TreeNode::Split {
            test: best.test,
            children,
            known_fractions,
            distribution,
        };
        id
    }

    fn best_test(&mut self, rows: &[(usize, F)], distribution: &[F], total: F) -> Option<Candidate<F>> {
        let n_features = self.data.n_predictors();
        let (candidates, fallbacks) = match self.sampler.as_mut() {
            Some(s) => s.draw(n_features),
            None => ((0..n_features).collect(), Vec::new()),
        };
        let mut best: Option<Candidate<F>> = None;
        for f in candidates {
            if let Some(c) = self.feature_test(f, rows, distribution.len(), total) {
                if best.as_ref().is_none_or(|b| c.gain_ratio > b.gain_ratio) {
                    best = Some(c);
                }
            }
        }
        if best.is_none() {
            best = fallbacks
                .into_iter()
                .find_map(|f| self.feature_test(f, rows, distribution.len(), total));
        }
        best
    }

    fn feature_test(&self, f: usize, rows: &[(usize, F)], n_classes: usize, total: F) -> Option<Candidate<F>> {
        match self.data.schema()[f].kind {
            FeatureKind::Numeric => self.numeric_test(f, rows, total),
            FeatureKind::Categorical if !self.used_categorical[f] => {
                self.categorical_test(f, rows, n_classes, total)
            }
            FeatureKind::Categorical => None,
        }
    }

    fn numeric_test(&self, feature: usize, rows: &[(usize, F)], total: F) -> Option<Candidate<F>> {
        let mut points: Vec<WeightedPoint<F>> = rows
            .iter()
            .filter_map(|&(p, weight)| {
                let inst = &self.data.instances()[p];
                inst.values[feature].as_num().map(|value| WeightedPoint {
                    value,
                    class: inst.class,
                    weight,
                })
            })
            .collect();
        let split = best_threshold_split(&mut points, self.n_classes, total, self.min_leaf)?;
        Some(Candidate {
            test: Test::Threshold {
                feature,
                threshold: split.threshold,
            },
            gain_ratio: split.gain_ratio,
        })
    }

    fn categorical_test(
        &self,
        feature: usize,
        rows: &[(usize, F)],
        n_classes: usize,
        total: F,
    ) -> Option<Candidate<F>> {
        let mut groups: BTreeMap<u32, Vec<F>> = BTreeMap::new();
        let mut known = vec![F::zero(); n_classes];
        for &(p, w) in rows {
            let inst = &self.data.instances()[p];
            if let Value::Cat(v) = inst.values[feature] {
                let g = groups.entry(v).or_insert_with(|| vec![F::zero(); n_classes]);
                g[inst.class] = g[inst.class] + w;
                known[inst.class] = known[inst.class] + w;
            }
        }
        let big_enough = groups
            .values()
            .filter(|g| g.iter().copied().sum::<F>() >= self.min_leaf)
            .count();
        if big_enough < 2 {
            return None;
        }
        let values: Vec<u32> = groups.keys().copied().collect();
        let partition = Partition::new(groups.into_values().collect()).ok()?;
        let pooled_h = entropy(&known).ok()?;
        let gain = pooled_h - conditional_entropy(&partition);
        if gain <= min_gain::<F>() {
            return None;
        }
        match gain_ratio_with_missing(&known, &partition, total).ok()? {
            GainRatio::Defined(gr) if gr > F::zero() => Some(Candidate {
                test: Test::Categorical { feature, values },
                gain_ratio: gr,
            }),
            _ => None,
        }
    }
}
