//! Entropy and gain-ratio kernels used by tree induction and feature ranking.
//!
//! Counts are weights (`F`), not integers: tree induction routes instances
//! with missing values fractionally, so class tables carry fractional mass.
//! All logarithms are base 2.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Gain ratio of a test. `Undefined` when the test's own entropy is zero
/// (every instance falls in one branch), which callers treat as "not usable".
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainRatio<F> {
    Defined(F),
    Undefined,
}

impl<F: Scalar> GainRatio<F> {
    pub fn value(self) -> Option<F> {
        match self {
            GainRatio::Defined(v) => Some(v),
            GainRatio::Undefined => None,
        }
    }

    /// Ranking score: the ratio, or zero when undefined.
    pub fn rank(self) -> F {
        self.value().unwrap_or_else(F::zero)
    }
}

/// `-sum p log2 p` over the non-zero entries of `counts`, with `p = c / total`.
fn entropy_with_total<F: Scalar>(counts: &[F], total: F) -> F {
    if total <= F::zero() {
        return F::zero();
    }
    let mut h = F::zero();
    for &c in counts {
        if c > F::zero() {
            let p = c / total;
            h = h - p * p.log2();
        }
    }
    // rounding can leave a tiny negative value for a single-class table
    h.max(F::zero())
}

/// Entropy of a class-count table.
pub fn entropy<F: Scalar>(label_counts: &[F]) -> Result<F> {
    check_counts(label_counts)?;
    let total: F = label_counts.iter().copied().sum();
    if total <= F::zero() {
        return Err(Error::Precondition("entropy of an empty count table".into()));
    }
    Ok(entropy_with_total(label_counts, total))
}

fn check_counts<F: Scalar>(counts: &[F]) -> Result<()> {
    if counts.iter().any(|c| !c.is_finite() || *c < F::zero()) {
        return Err(Error::Precondition(
            "counts must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

/// Instances split into groups, each described by its class-count table.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<F> {
    groups: Vec<Vec<F>>,
    sizes: Vec<F>,
    total: F,
}

impl<F: Scalar> Partition<F> {
    pub fn new(groups: Vec<Vec<F>>) -> Result<Self> {
        for g in &groups {
            check_counts(g)?;
        }
        let sizes: Vec<F> = groups.iter().map(|g| g.iter().copied().sum()).collect();
        let total = sizes.iter().copied().sum();
        Ok(Partition {
            groups,
            sizes,
            total,
        })
    }

    pub fn groups(&self) -> &[Vec<F>] {
        &self.groups
    }

    pub fn sizes(&self) -> &[F] {
        &self.sizes
    }

    pub fn total(&self) -> F {
        self.total
    }

    /// Element-wise sum of the group tables.
    pub fn pooled(&self) -> Vec<F> {
        let width = self.groups.iter().map(Vec::len).max().unwrap_or(0);
        let mut pooled = vec![F::zero(); width];
        for g in &self.groups {
            for (p, &c) in pooled.iter_mut().zip(g) {
                *p = *p + c;
            }
        }
        pooled
    }
}

/// Weighted mean entropy of the groups: `sum |T_i|/|T| H(T_i)`.
pub fn conditional_entropy<F: Scalar>(partition: &Partition<F>) -> F {
    if partition.total <= F::zero() {
        return F::zero();
    }
    partition
        .groups
        .iter()
        .zip(&partition.sizes)
        .filter(|(_, &n)| n > F::zero())
        .map(|(g, &n)| n / partition.total * entropy_with_total(g, n))
        .sum()
}

/// Entropy of the group sizes themselves (the split information).
pub fn intrinsic_entropy<F: Scalar>(partition: &Partition<F>) -> F {
    entropy_with_total(&partition.sizes, partition.total)
}

/// `(H(T) - H(T|X)) / H(X)`.
pub fn gain_ratio<F: Scalar>(labels: &[F], partition: &Partition<F>) -> Result<GainRatio<F>> {
    let total: F = labels.iter().copied().sum();
    gain_ratio_with_missing(labels, partition, total)
}

/// Gain ratio when part of the instances have no value for the feature.
///
/// `labels` and `partition` cover only the known-valued instances;
/// `total_weight` also counts the unknown ones. The information gain is
/// multiplied by the known fraction, the split information is taken over the
/// known groups only.
pub fn gain_ratio_with_missing<F: Scalar>(
    labels: &[F],
    partition: &Partition<F>,
    total_weight: F,
) -> Result<GainRatio<F>> {
    check_counts(labels)?;
    let known: F = labels.iter().copied().sum();
    let pooled = partition.pooled();
    let width = pooled.len().max(labels.len());
    let tol = F::lit(1e-9) * (F::one() + known);
    for j in 0..width {
        let a = labels.get(j).copied().unwrap_or_else(F::zero);
        let b = pooled.get(j).copied().unwrap_or_else(F::zero);
        if (a - b).abs() > tol {
            return Err(Error::Precondition(
                "partition does not cover the counted instances".into(),
            ));
        }
    }
    if known <= F::zero() || total_weight < known - tol {
        return Err(Error::Precondition("gain ratio of an empty table".into()));
    }
    let split_info = intrinsic_entropy(partition);
    if split_info <= F::zero() {
        return Ok(GainRatio::Undefined);
    }
    let gain = entropy_with_total(labels, known) - conditional_entropy(partition);
    let known_fraction = (known / total_weight).min(F::one());
    Ok(GainRatio::Defined(known_fraction * gain / split_info))
}

/// Smallest information gain counted as "positive"; anything below is
/// rounding noise.
pub(crate) fn min_gain<F: Scalar>() -> F {
    F::epsilon() * F::lit(64.0)
}

/// Best binary threshold test `x <= t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericSplit<F> {
    pub threshold: F,
    pub gain_ratio: F,
}

/// A known numeric value with its class and instance weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct WeightedPoint<F> {
    pub value: F,
    pub class: usize,
    pub weight: F,
}

/// Threshold search over (value, class) pairs; `None` values are missing.
///
/// Candidate thresholds are midpoints between consecutive distinct known
/// values. Returns `None` when no candidate has positive gain.
pub fn best_numeric_split<F: Scalar>(values: &[(Option<F>, usize)]) -> Option<NumericSplit<F>> {
    let n_classes = values.iter().map(|&(_, c)| c + 1).max().unwrap_or(0);
    let mut points: Vec<WeightedPoint<F>> = values
        .iter()
        .filter_map(|&(v, class)| {
            v.filter(|x| x.is_finite()).map(|value| WeightedPoint {
                value,
                class,
                weight: F::one(),
            })
        })
        .collect();
    best_threshold_split(&mut points, n_classes, F::from_count(values.len()), F::one())
}

/// Weighted threshold search. Sorts `points` in place. Both sides of an
/// accepted split carry at least `min_leaf` weight.
pub(crate) fn best_threshold_split<F: Scalar>(
    points: &mut [WeightedPoint<F>],
    n_classes: usize,
    total_weight: F,
    min_leaf: F,
) -> Option<NumericSplit<F>> {
    if points.len() < 2 {
        return None;
    }
    points.sort_by(|a, b| a.value.partial_cmp(&b.value).expect("finite values"));
    let mut right = vec![F::zero(); n_classes];
    for p in points.iter() {
        right[p.class] = right[p.class] + p.weight;
    }
    let known: F = right.iter().copied().sum();
    if known <= F::zero() {
        return None;
    }
    let base = entropy_with_total(&right, known);
    if base <= F::zero() {
        return None;
    }
    let known_fraction = (known / total_weight).min(F::one());
    let mut left = vec![F::zero(); n_classes];
    let mut left_w = F::zero();
    let mut best: Option<NumericSplit<F>> = None;
    let floor = min_gain::<F>();

    for i in 0..points.len() - 1 {
        let p = points[i];
        left[p.class] = left[p.class] + p.weight;
        right[p.class] = right[p.class] - p.weight;
        left_w = left_w + p.weight;
        let next = points[i + 1].value;
        if next <= p.value {
            continue;
        }
        let right_w = known - left_w;
        if left_w < min_leaf || right_w < min_leaf || right_w <= F::zero() {
            continue;
        }
        let cond = (left_w * entropy_with_total(&left, left_w)
            + right_w * entropy_with_total(&right, right_w))
            / known;
        let gain = base - cond;
        if gain <= floor {
            continue;
        }
        let (pl, pr) = (left_w / known, right_w / known);
        let split_info = -(pl * pl.log2() + pr * pr.log2());
        if split_info <= F::zero() {
            continue;
        }
        let gr = known_fraction * gain / split_info;
        if best.is_none_or(|b| gr > b.gain_ratio) {
            let mut threshold = p.value + (next - p.value) / F::lit(2.0);
            if threshold >= next {
                threshold = p.value;
            }
            best = Some(NumericSplit {
                threshold,
                gain_ratio: gr,
            });
        }
    }
    best
}
