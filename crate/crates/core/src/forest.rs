//! Bagged ensembles of randomized, unpruned C4.5 trees.
//!
//! Every tree gets its own ChaCha8 stream seeded from a per-tree seed, and
//! the per-tree seeds are drawn from the master seed up front, so a forest
//! is bit-identical whatever the number of worker threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureDescriptor, Interaction, Value};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{grow, DecisionTree, FeatureSampler, TreeParams};

pub const FOREST_FORMAT: &str = "drivid-forest";
pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features drawn at each node; `None` means
    /// `max(1, floor(sqrt(predictors)))`.
    pub n_features_per_node: Option<usize>,
    pub min_leaf_instances: usize,
    /// Train each tree on a bootstrap sample. Turning this off trains every
    /// tree on the full training set.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            n_features_per_node: None,
            min_leaf_instances: 1,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    /// Per-node subset size for `n_predictors` features.
    pub fn resolve_features_per_node(&self, n_predictors: usize) -> Result<usize> {
        let k = self
            .n_features_per_node
            .unwrap_or_else(|| ((n_predictors as f64).sqrt().floor() as usize).max(1));
        if k == 0 || k > n_predictors {
            return Err(Error::InvalidParameter(format!(
                "n_features_per_node must be in [1, {n_predictors}], got {k}"
            )));
        }
        Ok(k)
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            min_leaf_instances: self.min_leaf_instances,
            pruning_enabled: false,
            ..TreeParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
        }
        self.tree_params().validate()
    }
}

/// Row positions of a bootstrap sample of `n` rows: `n` uniform draws with
/// replacement.
pub fn bootstrap_positions<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn bootstrap_sample<F: Scalar>(dataset: &Dataset<F>, seed: u64) -> Result<Dataset<F>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(dataset.select_rows(&bootstrap_positions(dataset.len(), &mut rng)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestPrediction {
    pub class: usize,
    pub vote_share: f64,
    pub votes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest<F> {
    format: String,
    version: u32,
    params: ForestParams,
    n_features_per_node: usize,
    master_seed: u64,
    per_tree_seed: Vec<u64>,
    features: Vec<FeatureDescriptor>,
    class_order: Vec<String>,
    training_priors: Vec<f64>,
    trees: Vec<DecisionTree<F>>,
}

pub fn train_forest<F: Scalar>(
    training: &Dataset<F>,
    params: &ForestParams,
    master_seed: u64,
) -> Result<Forest<F>> {
    params.validate()?;
    training.require_trainable()?;
    let k = params.resolve_features_per_node(training.n_predictors())?;
    let mut master = ChaCha8Rng::seed_from_u64(master_seed);
    let seeds: Vec<u64> = (0..params.n_trees).map(|_| master.next_u64()).collect();
    let tree_params = params.tree_params();
    let n = training.len();
    let trees: Vec<DecisionTree<F>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let positions = if params.bootstrap {
                bootstrap_positions(n, &mut rng)
            } else {
                (0..n).collect()
            };
            let rows = positions.into_iter().map(|p| (p, F::one())).collect();
            let sampler = FeatureSampler {
                rng: &mut rng,
                per_node: k,
            };
            grow(training, rows, &tree_params, Some(sampler))
        })
        .collect();
    let counts = training.class_counts();
    let training_priors = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(Forest {
        format: FOREST_FORMAT.to_string(),
        version: FOREST_FORMAT_VERSION,
        params: *params,
        n_features_per_node: k,
        master_seed,
        per_tree_seed: seeds,
        features: training.schema().to_vec(),
        class_order: training.classes().to_vec(),
        training_priors,
        trees,
    })
}

impl<F: Scalar> Forest<F> {
    #[cfg(test)]
    pub(crate) fn from_trees(trees: Vec<DecisionTree<F>>, training_priors: Vec<f64>) -> Self {
        let features = trees[0].features().to_vec();
        Forest {
            format: FOREST_FORMAT.to_string(),
            version: FOREST_FORMAT_VERSION,
            params: ForestParams {
                n_trees: trees.len(),
                ..ForestParams::default()
            },
            n_features_per_node: features.len(),
            master_seed: 0,
            per_tree_seed: vec![0; trees.len()],
            class_order: trees[0].classes().to_vec(),
            features,
            training_priors,
            trees,
        }
    }

    pub fn trees(&self) -> &[DecisionTree<F>] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn n_features_per_node(&self) -> usize {
        self.n_features_per_node
    }

    pub fn per_tree_seed(&self) -> &[u64] {
        &self.per_tree_seed
    }

    pub fn features(&self) -> &[FeatureDescriptor] {
        &self.features
    }

    pub fn classes(&self) -> &[String] {
        &self.class_order
    }

    pub fn training_priors(&self) -> &[f64] {
        &self.training_priors
    }

    /// Reorders the trees; predictions do not depend on tree order.
    pub fn with_tree_order(mut self, order: &[usize]) -> Self {
        self.trees = order.iter().map(|&i| self.trees[i].clone()).collect();
        self.per_tree_seed = order.iter().map(|&i| self.per_tree_seed[i]).collect();
        self
    }

    /// Majority vote. Ties go to the class with the higher training prior,
    /// then to the class listed first.
    pub fn predict(&self, values: &[Value<F>]) -> Result<ForestPrediction> {
        let mut votes = vec![0usize; self.class_order.len()];
        for tree in &self.trees {
            votes[tree.predict(values)?.class] += 1;
        }
        let mut best = 0;
        for c in 1..votes.len() {
            let better = votes[c] > votes[best]
                || (votes[c] == votes[best] && self.training_priors[c] > self.training_priors[best]);
            if better {
                best = c;
            }
        }
        Ok(ForestPrediction {
            class: best,
            vote_share: votes[best] as f64 / self.trees.len() as f64,
            votes,
        })
    }

    pub fn predict_label(&self, inst: &Interaction<F>) -> Result<(&str, f64)> {
        let p = self.predict(&inst.values)?;
        Ok((&self.class_order[p.class], p.vote_share))
    }

    pub fn predict_batch(&self, rows: &[Vec<Value<F>>]) -> Result<Vec<ForestPrediction>> {
        rows.par_iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let forest: Forest<F> = serde_json::from_str(text)?;
        forest.check()?;
        Ok(forest)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Format(m.to_string()));
        if self.format != FOREST_FORMAT {
            return bad("not a forest document");
        }
        if self.version != FOREST_FORMAT_VERSION {
            return bad("unsupported forest format version");
        }
        if self.trees.is_empty() {
            return bad("forest has no trees");
        }
        if self.per_tree_seed.len() != self.trees.len() {
            return bad("seed count does not match tree count");
        }
        if self.n_features_per_node == 0 || self.n_features_per_node > self.features.len() {
            return bad("n_features_per_node out of range");
        }
        if self.training_priors.len() != self.class_order.len() {
            return bad("prior count does not match class count");
        }
        for tree in &self.trees {
            tree.check()?;
            if tree.classes() != self.class_order.as_slice() || tree.features() != self.features.as_slice() {
                return bad("tree schema differs from forest schema");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{train_c45, TreeNode};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use std::collections::HashSet;

    fn noisy(seed: u64, n: usize) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<(Vec<f64>, &str)> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
                let label = if x[0] + 0.3 * rng.random::<f64>() > 0.6 { "A" } else { "B" };
                (x, label)
            })
            .collect();
        Dataset::from_numeric_rows(&["a", "b", "c", "d", "e"], "driver", &rows).unwrap()
    }

    fn separable(n: usize) -> Dataset<f64> {
        let rows: Vec<(Vec<f64>, &str)> = (0..n)
            .map(|i| {
                let x = i as f64;
                (vec![(x * 7.0) % 13.0, x, (x * 3.0) % 5.0], if i < n / 2 { "A" } else { "B" })
            })
            .collect();
        Dataset::from_numeric_rows(&["p", "q", "r"], "driver", &rows).unwrap()
    }

    #[test]
    fn bootstrap_of_one_row_repeats_it() {
        let ds = Dataset::from_numeric_rows(&["x"], "d", &[(vec![3.0f64], "A")]).unwrap();
        let s = bootstrap_sample(&ds, 9).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.instances()[0].values, ds.instances()[0].values);
    }

    #[test]
    fn bootstrap_is_seeded() {
        let ds = noisy(1, 50);
        let a = bootstrap_sample(&ds, 4).unwrap();
        let b = bootstrap_sample(&ds, 4).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), bootstrap_sample(&ds, 5).unwrap().fingerprint());
    }

    #[test]
    fn bootstrap_keeps_about_sixty_three_percent() {
        let mean: f64 = (0..200u64)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let distinct: HashSet<usize> = bootstrap_positions(1000, &mut rng).into_iter().collect();
                distinct.len() as f64 / 1000.0
            })
            .sum::<f64>()
            / 200.0;
        assert!((mean - 0.632).abs() <= 0.02, "mean distinct fraction {mean}");
    }

    #[test]
    fn degenerate_forest_is_c45() {
        let ds = noisy(7, 80);
        let params = ForestParams {
            n_trees: 1,
            n_features_per_node: Some(5),
            bootstrap: false,
            ..ForestParams::default()
        };
        let forest = train_forest(&ds, &params, 3).unwrap();
        let tree_params = TreeParams {
            min_leaf_instances: 1,
            ..TreeParams::unpruned()
        };
        let tree = train_c45(&ds, &tree_params).unwrap();
        assert_eq!(forest.trees()[0].nodes(), tree.nodes());
        for inst in noisy(8, 40).instances() {
            assert_eq!(forest.predict(&inst.values).unwrap().class, tree.predict(&inst.values).unwrap().class);
        }
    }

    #[test]
    fn full_subsets_without_bootstrap_give_identical_trees() {
        let ds = noisy(2, 60);
        let params = ForestParams {
            n_trees: 6,
            n_features_per_node: Some(5),
            bootstrap: false,
            ..ForestParams::default()
        };
        let forest = train_forest(&ds, &params, 11).unwrap();
        assert!(forest.trees().windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn separable_data_is_fit_by_vote() {
        let ds = separable(60);
        let params = ForestParams {
            n_trees: 25,
            ..ForestParams::default()
        };
        let forest = train_forest(&ds, &params, 5).unwrap();
        for inst in ds.instances() {
            assert_eq!(forest.predict(&inst.values).unwrap().class, inst.class);
        }
    }

    #[test]
    fn training_instances_get_unanimous_votes_on_separable_data() {
        let rows: Vec<(Vec<f64>, &str)> = (0..40)
            .map(|i| (vec![if i < 20 { i as f64 } else { 100.0 + i as f64 }], if i < 20 { "A" } else { "B" }))
            .collect();
        let ds = Dataset::from_numeric_rows(&["x"], "d", &rows).unwrap();
        let forest = train_forest(&ds, &ForestParams::default(), 1).unwrap();
        for inst in ds.instances() {
            assert_eq!(forest.predict(&inst.values).unwrap().vote_share, 1.0);
        }
    }

    fn constant_tree(class: usize) -> DecisionTree<f64> {
        let mut distribution = vec![0.0, 0.0];
        distribution[class] = 1.0;
        DecisionTree::from_parts(
            vec![FeatureDescriptor::numeric("x", 0)],
            vec!["0".into(), "1".into()],
            TreeParams::unpruned(),
            vec![TreeNode::Leaf { prediction: class, distribution }],
        )
    }

    #[test]
    fn majority_vote_examples() {
        let x = [Value::Num(0.0)];
        let f = Forest::from_trees(vec![constant_tree(1), constant_tree(1), constant_tree(0)], vec![0.5, 0.5]);
        let p = f.predict(&x).unwrap();
        assert_eq!(p.class, 1);
        assert!((p.vote_share - 2.0 / 3.0).abs() < 1e-15);

        let tie = Forest::from_trees(vec![constant_tree(1), constant_tree(0)], vec![0.6, 0.4]);
        assert_eq!(tie.predict(&x).unwrap().class, 0);
        let tie = Forest::from_trees(vec![constant_tree(0), constant_tree(1)], vec![0.4, 0.6]);
        assert_eq!(tie.predict(&x).unwrap().class, 1);
        let tie = Forest::from_trees(vec![constant_tree(1), constant_tree(0)], vec![0.5, 0.5]);
        assert_eq!(tie.predict(&x).unwrap().class, 0);
    }

    #[test]
    fn out_of_range_subset_size_is_rejected() {
        let ds = noisy(1, 20);
        for k in [0, 6] {
            let params = ForestParams {
                n_features_per_node: Some(k),
                ..ForestParams::default()
            };
            assert!(matches!(train_forest(&ds, &params, 0), Err(Error::InvalidParameter(_))));
        }
        let none = ForestParams { n_trees: 0, ..ForestParams::default() };
        assert!(train_forest(&ds, &none, 0).is_err());
    }

    #[test]
    fn default_subset_size_is_floor_sqrt() {
        let p = ForestParams::default();
        assert_eq!(p.resolve_features_per_node(1).unwrap(), 1);
        assert_eq!(p.resolve_features_per_node(3).unwrap(), 1);
        assert_eq!(p.resolve_features_per_node(51).unwrap(), 7);
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let forest = train_forest(&noisy(1, 20), &ForestParams { n_trees: 3, ..Default::default() }, 0).unwrap();
        assert!(forest.predict(&[Value::Num(1.0)]).is_err());
    }

    #[test]
    fn same_seed_same_forest_any_thread_count() {
        let ds = noisy(3, 120);
        let params = ForestParams { n_trees: 12, ..ForestParams::default() };
        let json: Vec<String> = [1, 2, 5]
            .iter()
            .map(|&threads| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
                pool.install(|| train_forest(&ds, &params, 77).unwrap().to_json().unwrap())
            })
            .collect();
        assert!(json.windows(2).all(|w| w[0] == w[1]));
        let other = train_forest(&ds, &params, 78).unwrap().to_json().unwrap();
        assert_ne!(json[0], other);
    }

    #[test]
    fn json_round_trip() {
        let forest = train_forest(&noisy(4, 60), &ForestParams { n_trees: 5, ..Default::default() }, 9).unwrap();
        let json = forest.to_json().unwrap();
        let back = Forest::<f64>::from_json(&json).unwrap();
        assert_eq!(back, forest);
        assert_eq!(back.to_json().unwrap(), json);
        let broken = json.replacen("\"version\":1", "\"version\":2", 1);
        assert!(Forest::<f64>::from_json(&broken).is_err());
    }

    #[test]
    fn forest_works_in_single_precision() {
        let rows: Vec<(Vec<f32>, &str)> = (0..30)
            .map(|i| (vec![i as f32, (i % 4) as f32], if i < 15 { "A" } else { "B" }))
            .collect();
        let ds = Dataset::<f32>::from_numeric_rows(&["x", "y"], "d", &rows).unwrap();
        let forest = train_forest(&ds, &ForestParams { n_trees: 9, ..Default::default() }, 2).unwrap();
        assert_eq!(forest.predict(&[Value::Num(29.0f32), Value::Num(1.0)]).unwrap().class, 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn vote_equals_exhaustive_tally(seed in any::<u64>(), n_trees in 1usize..=10) {
            let ds = noisy(seed, 50);
            let forest = train_forest(&ds, &ForestParams { n_trees, ..Default::default() }, seed).unwrap();
            let priors = forest.training_priors().to_vec();
            for inst in noisy(seed ^ 1, 20).instances() {
                let mut tally = [0usize; 2];
                for t in forest.trees() {
                    tally[t.predict(&inst.values).unwrap().class] += 1;
                }
                let expected = match tally[0].cmp(&tally[1]) {
                    std::cmp::Ordering::Greater => 0,
                    std::cmp::Ordering::Less => 1,
                    std::cmp::Ordering::Equal => usize::from(priors[1] > priors[0]),
                };
                let p = forest.predict(&inst.values).unwrap();
                prop_assert_eq!(p.class, expected);
                prop_assert_eq!(p.votes, tally.to_vec());
            }
        }

        #[test]
        fn tree_order_does_not_matter(seed in any::<u64>()) {
            let ds = noisy(seed, 40);
            let forest = train_forest(&ds, &ForestParams { n_trees: 8, ..Default::default() }, seed).unwrap();
            let mut order: Vec<usize> = (0..8).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled = forest.clone().with_tree_order(&order);
            for inst in noisy(seed ^ 2, 20).instances() {
                prop_assert_eq!(forest.predict(&inst.values).unwrap(), shuffled.predict(&inst.values).unwrap());
            }
        }
    }
}
