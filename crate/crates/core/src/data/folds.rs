use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Assignment of every instance position to one of `k` folds.
///
/// Positions are shuffled with a seeded RNG and dealt round-robin, so fold
/// sizes differ by at most one and the first `n mod k` folds get the extra
/// instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn new<F: Scalar>(dataset: &Dataset<F>, k: usize, seed: u64, stratified: bool) -> Result<Self> {
        Self::for_len(dataset.len(), k, seed, stratified.then(|| {
            dataset.instances().iter().map(|i| i.class).collect()
        }))
    }

    /// `classes`, when given, makes the deal stratified: the shuffled order is
    /// stably regrouped by class before dealing.
    pub fn for_len(n: usize, k: usize, seed: u64, classes: Option<Vec<usize>>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("fold count must be >= 2, got {k}")));
        }
        if k > n {
            return Err(Error::InvalidParameter(format!(
                "fold count {k} exceeds instance count {n}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        if let Some(classes) = classes {
            order.sort_by_key(|&p| classes[p]);
        }
        let mut folds = vec![Vec::with_capacity(n / k + 1); k];
        for (slot, p) in order.into_iter().enumerate() {
            folds[slot % k].push(p);
        }
        for f in &mut folds {
            f.sort_unstable();
        }
        Ok(FoldPlan { k, folds })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.folds.iter().map(Vec::len).collect()
    }

    pub fn test_positions(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// Every position outside `fold`, ascending.
    pub fn train_positions(&self, fold: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        v.sort_unstable();
        v
    }

    /// Materializes `(training, test)` for each fold.
    pub fn split<F: Scalar>(&self, dataset: &Dataset<F>) -> Vec<(Dataset<F>, Dataset<F>)> {
        (0..self.k)
            .map(|i| {
                (
                    dataset.select_rows(&self.train_positions(i)),
                    dataset.select_rows(self.test_positions(i)),
                )
            })
            .collect()
    }
}

/// `k` training/test pairs with uniformly random (unstratified) assignment.
pub fn split_folds<F: Scalar>(
    dataset: &Dataset<F>,
    k: usize,
    seed: u64,
) -> Result<Vec<(Dataset<F>, Dataset<F>)>> {
    Ok(FoldPlan::new(dataset, k, seed, false)?.split(dataset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn numbered(n: usize) -> Dataset<f64> {
        let rows: Vec<(Vec<f64>, &str)> = (0..n)
            .map(|i| (vec![i as f64], if i % 3 == 0 { "A" } else { "B" }))
            .collect();
        Dataset::from_numeric_rows(&["x"], "d", &rows).unwrap()
    }

    #[test]
    fn equal_and_balanced_sizes() {
        let plan = FoldPlan::for_len(100, 10, 7, None).unwrap();
        assert_eq!(plan.sizes(), vec![10; 10]);
        let plan = FoldPlan::for_len(95, 10, 7, None).unwrap();
        assert_eq!(plan.sizes(), [10, 10, 10, 10, 10, 9, 9, 9, 9, 9]);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(FoldPlan::for_len(5, 6, 0, None).is_err());
        assert!(FoldPlan::for_len(5, 1, 0, None).is_err());
    }

    #[test]
    fn seeded() {
        let a = FoldPlan::for_len(50, 5, 11, None).unwrap();
        let b = FoldPlan::for_len(50, 5, 11, None).unwrap();
        let c = FoldPlan::for_len(50, 5, 12, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stratified_spreads_classes() {
        let ds = numbered(30);
        let plan = FoldPlan::new(&ds, 5, 3, true).unwrap();
        for f in 0..5 {
            let a = plan
                .test_positions(f)
                .iter()
                .filter(|&&p| ds.instances()[p].class == 0)
                .count();
            assert_eq!(a, 2);
        }
    }

    #[test]
    fn materialized_pairs_keep_row_ids() {
        let ds = numbered(12);
        let pairs = split_folds(&ds, 4, 1).unwrap();
        let mut tested: Vec<usize> = pairs
            .iter()
            .flat_map(|(_, te)| te.instances().iter().map(|i| i.row_id))
            .collect();
        tested.sort_unstable();
        assert_eq!(tested, (0..12).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn folds_partition_the_rows(n in 2usize..200, k in 2usize..12, seed in any::<u64>(), strat in any::<bool>()) {
            prop_assume!(k <= n);
            let classes = strat.then(|| (0..n).map(|i| i % 3).collect());
            let plan = FoldPlan::for_len(n, k, seed, classes).unwrap();
            let sizes = plan.sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for i in 0..k {
                let test = plan.test_positions(i);
                let train = plan.train_positions(i);
                prop_assert!(test.iter().all(|p| train.binary_search(p).is_err()));
                let mut all: Vec<usize> = test.iter().chain(&train).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
