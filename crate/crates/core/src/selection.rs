//! Gain-ratio feature ranking and subset selection.
//!
//! The default rule ranks every predictor, drops zero ranks, then walks the
//! remaining behavioural (non-timestamp) features from the lowest rank up,
//! discarding while the running rank sum stays at or below their average.
//! Timestamp-derived features with a nonzero rank are always kept.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind, Value};
use crate::error::{Error, Result};
use crate::info_theory::{
    best_numeric_split, conditional_entropy, entropy, gain_ratio_with_missing, min_gain, Partition,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FsMode {
    /// Cumulative-sum prefix discard.
    #[default]
    Paradigm,
    /// Discard each behavioural feature whose own rank is at or below the average.
    Individual,
    /// Keep every nonzero-ranked feature.
    Off,
}

impl fmt::Display for FsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FsMode::Paradigm => "paradigm",
            FsMode::Individual => "individual",
            FsMode::Off => "off",
        })
    }
}

impl FromStr for FsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paradigm" => Ok(FsMode::Paradigm),
            "individual" => Ok(FsMode::Individual),
            "off" => Ok(FsMode::Off),
            other => Err(Error::Config(format!(
                "unknown feature selection mode `{other}` (expected paradigm, individual or off)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub feature: usize,
    pub name: String,
    pub rank: f64,
    pub timestamp_correlated: bool,
}

/// Every predictor with its rank, ascending by rank then feature index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    entries: Vec<RankEntry>,
}

impl FeatureRanking {
    pub fn new(mut entries: Vec<RankEntry>) -> Result<Self> {
        if entries.iter().any(|e| !e.rank.is_finite() || e.rank < 0.0) {
            return Err(Error::Precondition("ranks must be finite and non-negative".into()));
        }
        let mut seen: Vec<usize> = entries.iter().map(|e| e.feature).collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != entries.len() {
            return Err(Error::Precondition("feature ranked twice".into()));
        }
        entries.sort_by(|a, b| a.rank.total_cmp(&b.rank).then(a.feature.cmp(&b.feature)));
        Ok(FeatureRanking { entries })
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn timestamp_set(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .entries
            .iter()
            .filter(|e| e.timestamp_correlated)
            .map(|e| e.feature)
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn rank_of(&self, feature: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.rank)
    }
}

/// Gain ratio of one predictor against the class: the value partition for
/// categorical features, the best binary split for numeric ones. Zero when
/// the feature carries no usable information.
pub fn feature_rank<F: Scalar>(dataset: &Dataset<F>, feature: usize) -> F {
    let insts = dataset.instances();
    match dataset.schema()[feature].kind {
        FeatureKind::Numeric => {
            let pairs: Vec<(Option<F>, usize)> = insts
                .iter()
                .map(|i| (i.values[feature].as_num(), i.class))
                .collect();
            best_numeric_split(&pairs).map_or_else(F::zero, |s| s.gain_ratio)
        }
        FeatureKind::Categorical => {
            let n_classes = dataset.classes().len();
            let mut groups: BTreeMap<u32, Vec<F>> = BTreeMap::new();
            let mut known = vec![F::zero(); n_classes];
            for inst in insts {
                if let Value::Cat(v) = inst.values[feature] {
                    let g = groups.entry(v).or_insert_with(|| vec![F::zero(); n_classes]);
                    g[inst.class] = g[inst.class] + F::one();
                    known[inst.class] = known[inst.class] + F::one();
                }
            }
            let Ok(partition) = Partition::new(groups.into_values().collect()) else {
                return F::zero();
            };
            let Ok(pooled) = entropy(&known) else {
                return F::zero();
            };
            if pooled - conditional_entropy(&partition) <= min_gain::<F>() {
                return F::zero();
            }
            gain_ratio_with_missing(&known, &partition, F::from_count(insts.len()))
                .map_or_else(|_| F::zero(), |gr| gr.rank())
        }
    }
}

pub fn rank_features<F: Scalar>(dataset: &Dataset<F>) -> Result<FeatureRanking> {
    if dataset.n_predictors() == 0 {
        return Err(Error::NoFeatures);
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let entries = dataset
        .schema()
        .par_iter()
        .enumerate()
        .map(|(f, desc)| RankEntry {
            feature: f,
            name: desc.name.clone(),
            rank: feature_rank(dataset, f).to_f64_lossy(),
            timestamp_correlated: desc.timestamp_correlated,
        })
        .collect();
    FeatureRanking::new(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSubset {
    pub mode: FsMode,
    /// Ascending feature index.
    pub kept: Vec<usize>,
    pub discarded_zero: Vec<usize>,
    pub discarded_below_average: Vec<usize>,
    pub average_rank: f64,
    pub warning: Option<String>,
}

impl SelectedSubset {
    pub fn is_kept(&self, feature: usize) -> bool {
        self.kept.binary_search(&feature).is_ok()
    }

    fn status(&self, feature: usize) -> &'static str {
        if self.is_kept(feature) {
            "kept"
        } else if self.discarded_zero.contains(&feature) {
            "discarded_zero"
        } else {
            "discarded_below_average"
        }
    }
}

pub fn select_from_ranking(ranking: &FeatureRanking, mode: FsMode) -> SelectedSubset {
    let mut kept = Vec::new();
    let mut discarded_zero = Vec::new();
    let mut discarded_below_average = Vec::new();
    let mut behavioural = Vec::new();
    for e in ranking.entries() {
        if e.rank == 0.0 {
            discarded_zero.push(e.feature);
        } else if e.timestamp_correlated {
            kept.push(e.feature);
        } else {
            behavioural.push(e);
        }
    }
    let average_rank = if behavioural.is_empty() {
        0.0
    } else {
        behavioural.iter().map(|e| e.rank).sum::<f64>() / behavioural.len() as f64
    };
    match mode {
        FsMode::Off => kept.extend(behavioural.iter().map(|e| e.feature)),
        FsMode::Individual => {
            for e in &behavioural {
                if e.rank <= average_rank {
                    discarded_below_average.push(e.feature);
                } else {
                    kept.push(e.feature);
                }
            }
        }
        FsMode::Paradigm => {
            let mut sum = 0.0;
            let mut walking = true;
            for e in &behavioural {
                if walking {
                    sum += e.rank;
                    walking = sum <= average_rank;
                }
                if walking {
                    discarded_below_average.push(e.feature);
                } else {
                    kept.push(e.feature);
                }
            }
        }
    }
    let any_behavioural = kept
        .iter()
        .any(|f| behavioural.iter().any(|e| e.feature == *f));
    let warning = if any_behavioural {
        None
    } else if kept.is_empty() {
        Some("no feature survived selection".to_string())
    } else {
        Some("no behavioural feature survived selection; keeping timestamp features only".to_string())
    };
    kept.sort_unstable();
    discarded_zero.sort_unstable();
    discarded_below_average.sort_unstable();
    SelectedSubset {
        mode,
        kept,
        discarded_zero,
        discarded_below_average,
        average_rank,
        warning,
    }
}

/// Ranks `dataset` and selects with the default rule.
pub fn fs_paradigm<F: Scalar>(dataset: &Dataset<F>) -> Result<SelectedSubset> {
    Ok(select_from_ranking(&rank_features(dataset)?, FsMode::Paradigm))
}

pub fn select_features<F: Scalar>(
    dataset: &Dataset<F>,
    mode: FsMode,
) -> Result<(FeatureRanking, SelectedSubset)> {
    let ranking = rank_features(dataset)?;
    let subset = select_from_ranking(&ranking, mode);
    Ok((ranking, subset))
}

/// Feature, rank, timestamp flag and status, one row per predictor in
/// ranking order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub ranking: FeatureRanking,
    pub subset: SelectedSubset,
}

impl SelectionReport {
    pub fn to_text(&self) -> String {
        let width = self
            .ranking
            .entries()
            .iter()
            .map(|e| e.name.len())
            .max()
            .unwrap_or(0)
            .max("feature".len());
        let mut out = format!(
            "{:<width$}  {:>10}  {:<9}  status\n",
            "feature", "rank", "timestamp"
        );
        for e in self.ranking.entries() {
            out.push_str(&format!(
                "{:<width$}  {:>10.6}  {:<9}  {}\n",
                e.name,
                e.rank,
                if e.timestamp_correlated { "yes" } else { "no" },
                self.subset.status(e.feature)
            ));
        }
        out.push_str(&format!(
            "\nmode: {}\naverage rank: {:.6}\nkept: {} of {}\n",
            self.subset.mode,
            self.subset.average_rank,
            self.subset.kept.len(),
            self.ranking.entries().len()
        ));
        if let Some(w) = &self.subset.warning {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "rank", "timestamp_correlated", "status"])?;
        for e in self.ranking.entries() {
            w.write_record([
                e.name.as_str(),
                &e.rank.to_string(),
                if e.timestamp_correlated { "true" } else { "false" },
                self.subset.status(e.feature),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Invariant(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
    }

    /// Names of the kept features, in schema order.
    pub fn kept_names(&self) -> Vec<String> {
        self.subset
            .kept
            .iter()
            .filter_map(|&f| {
                self.ranking
                    .entries()
                    .iter()
                    .find(|e| e.feature == f)
                    .map(|e| e.name.clone())
            })
            .collect()
    }
}
