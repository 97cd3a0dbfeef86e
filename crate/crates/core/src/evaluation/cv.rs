use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{precision, recall, ClassMetrics, ConfusionCounts, Metric, MulticlassConfusion};
use crate::data::{Dataset, FoldPlan, Value};
use crate::error::{Error, Result};
use crate::pipeline::{FittedModel, MultiDriverModel, PipelineConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    /// Owner versus everybody else.
    Owner(String),
    /// Which of the drivers is driving.
    Multi,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Owner(o) => write!(f, "owner:{o}"),
            Task::Multi => f.write_str("multi"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            _ if s == "multi" => Ok(Task::Multi),
            Some(("owner", id)) if !id.is_empty() => Ok(Task::Owner(id.to_string())),
            _ => Err(Error::Config(format!("unknown task `{s}` (expected multi or owner:<id>)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub k: usize,
    /// Deal folds per class so every fold sees the class mix of the whole.
    pub stratified: bool,
    /// The seed here drives both the fold assignment and the learner.
    pub pipeline: PipelineConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 10,
            stratified: true,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Called with the fold index and exactly the rows feature selection reads
/// while training that fold.
pub type FoldProbe<'a, F> = &'a (dyn Fn(usize, &Dataset<F>) + Sync);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Row ids of the test instances.
    pub test_rows: Vec<usize>,
    pub accuracy: f64,
    /// Owner task: of the owner class. Multi-driver: support-weighted.
    pub precision: Metric,
    pub recall: Metric,
    /// Multi-driver only.
    pub macro_precision: Option<Metric>,
    pub macro_recall: Option<Metric>,
    pub confusion: MulticlassConfusion,
    pub kept: Vec<String>,
}

impl FoldResult {
    pub fn per_class(&self) -> Vec<ClassMetrics> {
        self.confusion.per_class()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub accuracy: f64,
    pub precision: Metric,
    pub recall: Metric,
    /// Folds whose precision (recall) was defined and entered the mean.
    pub precision_folds: usize,
    pub recall_folds: usize,
}

fn mean_defined(values: impl Iterator<Item = Metric>) -> (Metric, usize) {
    let defined: Vec<f64> = values.filter(|m| !m.undefined).map(|m| m.value).collect();
    if defined.is_empty() {
        return (
            Metric {
                value: 0.0,
                undefined: true,
            },
            0,
        );
    }
    (
        Metric::defined(defined.iter().sum::<f64>() / defined.len() as f64),
        defined.len(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: Task,
    pub learner: String,
    pub fs_mode: String,
    pub seed: u64,
    pub k: usize,
    pub stratified: bool,
    /// Instances per class over the whole evaluated dataset.
    pub class_counts: Vec<(String, usize)>,
    pub folds: Vec<FoldResult>,
    pub aggregate: Aggregate,
    /// Sum of the per-fold confusion matrices.
    pub pooled: MulticlassConfusion,
}

impl EvaluationReport {
    pub fn per_class(&self) -> Vec<ClassMetrics> {
        self.pooled.per_class()
    }

    fn undefined_note(&self) -> Option<String> {
        let skipped_p = self.folds.len() - self.aggregate.precision_folds;
        let skipped_r = self.folds.len() - self.aggregate.recall_folds;
        (skipped_p + skipped_r > 0).then(|| {
            format!(
                "note: precision undefined in {skipped_p} fold(s), recall undefined in {skipped_r} fold(s); those folds are left out of the means"
            )
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "task: {}\nlearner: {}\nfs: {}\nseed: {}\nfolds: {}{}\n",
            self.task,
            self.learner,
            self.fs_mode,
            self.seed,
            self.k,
            if self.stratified { " (stratified)" } else { "" }
        );
        out.push_str("class counts:");
        for (c, n) in &self.class_counts {
            out.push_str(&format!(" {c}={n}"));
        }
        out.push_str("\n\n");
        let averaging = if self.task == Task::Multi { " (weighted)" } else { "" };
        out.push_str(&format!(
            "{:>6}  {:>8}  {:>9}  {:>9}  {:>6}  {:>5}\n",
            "fold", "accuracy", "precision", "recall", "test", "kept"
        ));
        let flag = |m: &Metric| if m.undefined { "*" } else { " " };
        for f in &self.folds {
            out.push_str(&format!(
                "{:>6}  {:>8.4}  {:>8.4}{}  {:>8.4}{}  {:>6}  {:>5}\n",
                f.fold,
                f.accuracy,
                f.precision.value,
                flag(&f.precision),
                f.recall.value,
                flag(&f.recall),
                f.n_test,
                f.kept.len()
            ));
        }
        let a = &self.aggregate;
        out.push_str(&format!(
            "{:>6}  {:>8.4}  {:>8.4}{}  {:>8.4}{}\n",
            "mean",
            a.accuracy,
            a.precision.value,
            flag(&a.precision),
            a.recall.value,
            flag(&a.recall)
        ));
        out.push_str(&format!("precision/recall{averaging}; * = undefined\n"));
        if let Some(note) = self.undefined_note() {
            out.push_str(&note);
            out.push('\n');
        }
        if self.task == Task::Multi {
            out.push_str(&format!(
                "\n{:<12}  {:>7}  {:>9}  {:>9}\n",
                "driver", "support", "precision", "recall"
            ));
            for m in self.per_class() {
                out.push_str(&format!(
                    "{:<12}  {:>7}  {:>8.4}{}  {:>8.4}{}\n",
                    m.class,
                    m.support,
                    m.precision.value,
                    flag(&m.precision),
                    m.recall.value,
                    flag(&m.recall)
                ));
            }
            let (wp, wr) = self.pooled.weighted();
            let (mp, mr) = self.pooled.macro_average();
            out.push_str(&format!(
                "pooled weighted precision {:.4} recall {:.4}; macro precision {:.4} recall {:.4}\n",
                wp.value, wr.value, mp.value, mr.value
            ));
        }
        for f in &self.folds {
            out.push_str(&format!("fold {} kept: {}\n", f.fold, f.kept.join(" ")));
        }
        out
    }

    /// One row per fold plus a `mean` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "task",
            "learner",
            "fs",
            "seed",
            "fold",
            "n_train",
            "n_test",
            "accuracy",
            "precision",
            "recall",
            "precision_undefined",
            "recall_undefined",
            "macro_precision",
            "macro_recall",
            "kept",
        ])?;
        let task = self.task.to_string();
        let seed = self.seed.to_string();
        let opt = |m: Option<Metric>| m.map_or_else(String::new, |m| m.value.to_string());
        for f in &self.folds {
            w.write_record([
                task.as_str(),
                &self.learner,
                &self.fs_mode,
                &seed,
                &f.fold.to_string(),
                &f.n_train.to_string(),
                &f.n_test.to_string(),
                &f.accuracy.to_string(),
                &f.precision.value.to_string(),
                &f.recall.value.to_string(),
                &f.precision.undefined.to_string(),
                &f.recall.undefined.to_string(),
                &opt(f.macro_precision),
                &opt(f.macro_recall),
                &f.kept.join(" "),
            ])?;
        }
        let a = &self.aggregate;
        let (mp, mr) = if self.task == Task::Multi {
            let (p, r) = mean_pair(&self.folds);
            (opt(Some(p)), opt(Some(r)))
        } else {
            (String::new(), String::new())
        };
        w.write_record([
            task.as_str(),
            &self.learner,
            &self.fs_mode,
            &seed,
            "mean",
            "",
            &self.folds.iter().map(|f| f.n_test).sum::<usize>().to_string(),
            &a.accuracy.to_string(),
            &a.precision.value.to_string(),
            &a.recall.value.to_string(),
            &a.precision.undefined.to_string(),
            &a.recall.undefined.to_string(),
            &mp,
            &mr,
            "",
        ])?;
        finish_csv(w)
    }

    /// One row per (fold, class).
    pub fn to_fold_class_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "task",
            "seed",
            "fold",
            "class",
            "support",
            "precision",
            "recall",
            "precision_undefined",
            "recall_undefined",
        ])?;
        let task = self.task.to_string();
        let seed = self.seed.to_string();
        for f in &self.folds {
            for m in f.per_class() {
                w.write_record([
                    task.as_str(),
                    &seed,
                    &f.fold.to_string(),
                    &m.class,
                    &m.support.to_string(),
                    &m.precision.value.to_string(),
                    &m.recall.value.to_string(),
                    &m.precision.undefined.to_string(),
                    &m.recall.undefined.to_string(),
                ])?;
            }
        }
        finish_csv(w)
    }
}

fn mean_pair(folds: &[FoldResult]) -> (Metric, Metric) {
    (
        mean_defined(folds.iter().filter_map(|f| f.macro_precision)).0,
        mean_defined(folds.iter().filter_map(|f| f.macro_recall)).0,
    )
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Invariant(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
}

type FoldPredictor<'m, F> = Box<dyn Fn(&[Value<F>]) -> Result<usize> + Send + Sync + 'm>;

/// A model trained on one fold, predicting class indices of the data it
/// was trained on.
pub(crate) struct FoldModel<'m, F> {
    pub kept: Vec<String>,
    pub predict: FoldPredictor<'m, F>,
}

pub fn cross_validate<F: Scalar>(dataset: &Dataset<F>, task: &Task, cv: &CvConfig) -> Result<EvaluationReport> {
    cross_validate_probed(dataset, task, cv, None)
}

pub fn cross_validate_probed<F: Scalar>(
    dataset: &Dataset<F>,
    task: &Task,
    cv: &CvConfig,
    probe: Option<FoldProbe<'_, F>>,
) -> Result<EvaluationReport> {
    let config = cv.pipeline;
    let fit = |fold: usize, train: &Dataset<F>| -> Result<FoldModel<'static, F>> {
        let fold_probe = probe.map(|p| move |d: &Dataset<F>| p(fold, d));
        let probe_ref = fold_probe.as_ref().map(|p| p as &(dyn Fn(&Dataset<F>) + Sync));
        match task {
            Task::Owner(_) => {
                let fitted = FittedModel::fit(train, &config, probe_ref)?;
                Ok(FoldModel {
                    kept: fitted.kept_names(),
                    predict: Box::new(move |v: &[Value<F>]| fitted.predict_input(v).map(|p| p.0)),
                })
            }
            Task::Multi => {
                let model: MultiDriverModel<F> =
                    crate::pipeline::train_multi_driver_probed(train, &config, probe_ref)?;
                // the model orders classes on its own; map back by label
                let remap: Vec<usize> = model
                    .class_order()
                    .iter()
                    .map(|c| train.class_index(c).expect("model classes come from the training data"))
                    .collect();
                Ok(FoldModel {
                    kept: model.fitted.kept_names(),
                    predict: Box::new(move |v: &[Value<F>]| {
                        model.fitted.predict_input(v).map(|p| remap[p.0])
                    }),
                })
            }
        }
    };
    evaluate_folds(dataset, task, cv, fit)
}

/// Fold loop shared by the real pipeline and test stand-ins. `fit` gets the
/// task-labeled training fold.
pub(crate) fn evaluate_folds<'m, F: Scalar, Fit>(
    dataset: &Dataset<F>,
    task: &Task,
    cv: &CvConfig,
    fit: Fit,
) -> Result<EvaluationReport>
where
    Fit: Fn(usize, &Dataset<F>) -> Result<FoldModel<'m, F>> + Sync,
{
    let labeled = match task {
        Task::Owner(owner) => dataset.label_for_owner(owner)?,
        Task::Multi => {
            let present = dataset.n_present_classes();
            if present < 2 {
                return Err(Error::TooFewClasses { found: present });
            }
            dataset.clone()
        }
    };
    let plan = FoldPlan::new(&labeled, cv.k, cv.pipeline.seed, cv.stratified)?;
    let folds: Vec<FoldResult> = (0..plan.k())
        .into_par_iter()
        .map(|i| {
            let train = labeled.select_rows(&plan.train_positions(i));
            let test = labeled.select_rows(plan.test_positions(i));
            let model = fit(i, &train)?;
            let mut confusion = MulticlassConfusion::new(labeled.classes().to_vec());
            for inst in test.instances() {
                confusion.record(inst.class, (model.predict)(&inst.values)?);
            }
            let accuracy = confusion.accuracy()?;
            let (precision, recall, macro_precision, macro_recall) = match task {
                Task::Owner(_) => {
                    let c: ConfusionCounts = confusion.one_vs_rest(1);
                    (precision(&c), recall(&c), None, None)
                }
                Task::Multi => {
                    let (p, r) = confusion.weighted();
                    let (mp, mr) = confusion.macro_average();
                    (p, r, Some(mp), Some(mr))
                }
            };
            Ok(FoldResult {
                fold: i,
                n_train: train.len(),
                n_test: test.len(),
                test_rows: test.instances().iter().map(|x| x.row_id).collect(),
                accuracy,
                precision,
                recall,
                macro_precision,
                macro_recall,
                confusion,
                kept: model.kept,
            })
        })
        .collect::<Result<_>>()?;

    let mut pooled = MulticlassConfusion::new(labeled.classes().to_vec());
    for f in &folds {
        pooled.merge(&f.confusion);
    }
    let (p, precision_folds) = mean_defined(folds.iter().map(|f| f.precision));
    let (r, recall_folds) = mean_defined(folds.iter().map(|f| f.recall));
    let aggregate = Aggregate {
        accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64,
        precision: p,
        recall: r,
        precision_folds,
        recall_folds,
    };
    let counts = labeled.class_counts();
    Ok(EvaluationReport {
        task: task.clone(),
        learner: cv.pipeline.learner.to_string(),
        fs_mode: cv.pipeline.fs_mode.to_string(),
        seed: cv.pipeline.seed,
        k: cv.k,
        stratified: cv.stratified,
        class_counts: labeled.classes().iter().cloned().zip(counts).collect(),
        folds,
        aggregate,
        pooled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnerExperimentReport {
    pub learner: String,
    pub seed: u64,
    pub k: usize,
    pub owners: Vec<(String, EvaluationReport)>,
    pub avg_accuracy: f64,
    /// Unweighted mean over owners.
    pub avg_precision: Metric,
    pub avg_recall: Metric,
    pub perfect_precision_owners: usize,
}

/// Cross-validates an owner model for every driver present in `dataset`.
pub fn owner_experiment<F: Scalar>(dataset: &Dataset<F>, cv: &CvConfig) -> Result<OwnerExperimentReport> {
    let counts = dataset.class_counts();
    let owners: Vec<String> = dataset
        .classes()
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 0)
        .map(|(c, _)| c.clone())
        .collect();
    if owners.len() < 2 {
        return Err(Error::TooFewClasses { found: owners.len() });
    }
    let reports: Vec<(String, EvaluationReport)> = owners
        .par_iter()
        .map(|o| cross_validate(dataset, &Task::Owner(o.clone()), cv).map(|r| (o.clone(), r)))
        .collect::<Result<_>>()?;
    let n = reports.len() as f64;
    Ok(OwnerExperimentReport {
        learner: cv.pipeline.learner.to_string(),
        seed: cv.pipeline.seed,
        k: cv.k,
        avg_accuracy: reports.iter().map(|(_, r)| r.aggregate.accuracy).sum::<f64>() / n,
        avg_precision: mean_defined(reports.iter().map(|(_, r)| r.aggregate.precision)).0,
        avg_recall: mean_defined(reports.iter().map(|(_, r)| r.aggregate.recall)).0,
        perfect_precision_owners: reports
            .iter()
            .filter(|(_, r)| !r.aggregate.precision.undefined && r.aggregate.precision.value == 1.0)
            .count(),
        owners: reports,
    })
}

impl OwnerExperimentReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "task: owner-all\nlearner: {}\nseed: {}\nfolds: {}\n\n{:<12}  {:>8}  {:>9}  {:>9}  {:>7}\n",
            self.learner, self.seed, self.k, "owner", "accuracy", "precision", "recall", "share"
        );
        for (o, r) in &self.owners {
            let share = owner_share(r);
            out.push_str(&format!(
                "{:<12}  {:>8.4}  {:>9.4}  {:>9.4}  {:>7.4}\n",
                o, r.aggregate.accuracy, r.aggregate.precision.value, r.aggregate.recall.value, share
            ));
        }
        out.push_str(&format!(
            "{:<12}  {:>8.4}  {:>9.4}  {:>9.4}\nowners with perfect precision: {} of {}\n",
            "average",
            self.avg_accuracy,
            self.avg_precision.value,
            self.avg_recall.value,
            self.perfect_precision_owners,
            self.owners.len()
        ));
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["owner", "learner", "seed", "accuracy", "precision", "recall", "owner_share"])?;
        let seed = self.seed.to_string();
        for (o, r) in &self.owners {
            w.write_record([
                o.as_str(),
                &self.learner,
                &seed,
                &r.aggregate.accuracy.to_string(),
                &r.aggregate.precision.value.to_string(),
                &r.aggregate.recall.value.to_string(),
                &owner_share(r).to_string(),
            ])?;
        }
        w.write_record([
            "average",
            &self.learner,
            &seed,
            &self.avg_accuracy.to_string(),
            &self.avg_precision.value.to_string(),
            &self.avg_recall.value.to_string(),
            "",
        ])?;
        finish_csv(w)
    }

    /// Per-fold rows of every owner's cross-validation.
    pub fn to_fold_csv(&self) -> Result<String> {
        let mut out = String::new();
        for (i, (_, r)) in self.owners.iter().enumerate() {
            let csv = r.to_csv()?;
            let body = if i == 0 { csv.as_str() } else { csv.split_once('\n').map_or("", |x| x.1) };
            out.push_str(body);
        }
        Ok(out)
    }
}

fn owner_share(r: &EvaluationReport) -> f64 {
    let total: usize = r.class_counts.iter().map(|c| c.1).sum();
    let owner = r.class_counts.get(1).map_or(0, |c| c.1);
    owner as f64 / total.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Interaction;
    use crate::forest::ForestParams;
    use crate::pipeline::Learner;
    use crate::selection::FsMode;
    use crate::tree::TreeParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;
    use std::sync::Mutex;

    fn synthetic(seed: u64, n: usize, drivers: usize, separable: bool) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = ["D1", "D2", "D3", "D4"];
        let rows: Vec<(Vec<f64>, &str)> = (0..n)
            .map(|i| {
                let d = i % drivers;
                let base = if separable { 100.0 * d as f64 } else { 0.0 };
                (
                    vec![base + rng.random_range(0.0..50.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                    names[d],
                )
            })
            .collect();
        Dataset::from_numeric_rows(&["speed", "noise_a", "noise_b"], "driver", &rows).unwrap()
    }

    fn cv(learner: Learner, seed: u64) -> CvConfig {
        CvConfig {
            k: 10,
            stratified: true,
            pipeline: PipelineConfig {
                learner,
                fs_mode: FsMode::Paradigm,
                seed,
            },
        }
    }

    fn small_rf() -> Learner {
        Learner::RandomForest(ForestParams {
            n_trees: 15,
            ..ForestParams::default()
        })
    }

    #[test]
    fn separable_corpus_scores_perfectly() {
        let ds = synthetic(1, 200, 3, true);
        for learner in [Learner::C45(TreeParams::default()), small_rf()] {
            let r = cross_validate(&ds, &Task::Multi, &cv(learner, 4)).unwrap();
            assert!(r.folds.iter().all(|f| f.accuracy == 1.0));
            assert_eq!(r.aggregate.precision.value, 1.0);
            assert_eq!(r.aggregate.recall.value, 1.0);
            let owner = cross_validate(&ds, &Task::Owner("D2".into()), &cv(learner, 4)).unwrap();
            assert_eq!(owner.aggregate.accuracy, 1.0);
        }
    }

    #[test]
    fn majority_stand_in_scores_one_half() {
        let ds = synthetic(2, 200, 2, false);
        let r = evaluate_folds(&ds, &Task::Owner("D1".into()), &cv(small_rf(), 1), |_, train: &Dataset<f64>| {
            let counts = train.class_counts();
            let majority = if counts[1] > counts[0] { 1 } else { 0 };
            Ok(FoldModel {
                kept: vec![],
                predict: Box::new(move |_: &[Value<f64>]| Ok(majority)),
            })
        })
        .unwrap();
        for f in &r.folds {
            assert!((f.accuracy - 0.5).abs() < 0.051, "fold accuracy {}", f.accuracy);
        }
        // always predicting "not owner" leaves precision undefined everywhere
        assert!(r.aggregate.precision.undefined);
        assert_eq!(r.aggregate.precision_folds, 0);
        assert!(r.to_text().contains("precision undefined in 10 fold(s)"));
    }

    #[test]
    fn folds_partition_and_selection_sees_training_rows_only() {
        let ds = synthetic(3, 97, 3, false);
        let seen: Mutex<Vec<(usize, Vec<usize>)>> = Mutex::new(Vec::new());
        let probe = |fold: usize, d: &Dataset<f64>| {
            seen.lock().unwrap().push((fold, d.instances().iter().map(|i| i.row_id).collect()));
        };
        let config = cv(Learner::C45(TreeParams::default()), 8);
        let r = cross_validate_probed(&ds, &Task::Multi, &config, Some(&probe)).unwrap();
        let mut all: Vec<usize> = r.folds.iter().flat_map(|f| f.test_rows.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..97).collect::<Vec<_>>());
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen.len(), 10);
        for (fold, rows) in seen {
            let test: BTreeSet<usize> = r.folds[fold].test_rows.iter().copied().collect();
            assert!(rows.iter().all(|x| !test.contains(x)));
            assert_eq!(rows.len() + test.len(), 97);
        }
    }

    #[test]
    fn aggregates_lie_within_fold_range() {
        let ds = synthetic(4, 150, 3, false);
        let r = cross_validate(&ds, &Task::Multi, &cv(small_rf(), 2)).unwrap();
        let within = |v: f64, xs: Vec<f64>| {
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            v >= lo - 1e-12 && v <= hi + 1e-12
        };
        assert!(within(r.aggregate.accuracy, r.folds.iter().map(|f| f.accuracy).collect()));
        assert!(within(r.aggregate.precision.value, r.folds.iter().map(|f| f.precision.value).collect()));
        assert!(within(r.aggregate.recall.value, r.folds.iter().map(|f| f.recall.value).collect()));
        assert!(r.aggregate.accuracy < 1.0);
    }

    #[test]
    fn reports_are_deterministic_across_thread_counts() {
        let ds = synthetic(5, 120, 3, false);
        let outputs: Vec<String> = [1, 3]
            .iter()
            .map(|&t| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
                pool.install(|| {
                    let r = cross_validate(&ds, &Task::Multi, &cv(small_rf(), 6)).unwrap();
                    r.to_csv().unwrap() + &r.to_fold_class_csv().unwrap() + &r.to_text()
                })
            })
            .collect();
        assert_eq!(outputs[0], outputs[1]);
        assert!(outputs[0].starts_with("task,learner,fs,seed,fold"));
    }

    #[test]
    fn owner_experiment_on_separable_drivers() {
        let ds = synthetic(6, 120, 2, true);
        let r = owner_experiment(&ds, &cv(small_rf(), 3)).unwrap();
        assert_eq!(r.owners.len(), 2);
        assert_eq!(r.avg_precision.value, 1.0);
        assert_eq!(r.avg_recall.value, 1.0);
        assert_eq!(r.perfect_precision_owners, 2);
        assert!(r.to_csv().unwrap().lines().count() == 4);
    }

    #[test]
    fn identical_drivers_are_indistinguishable() {
        // same generator for both drivers: precision hovers around the prior
        let ds = synthetic(7, 400, 2, false);
        let r = owner_experiment(&ds, &cv(Learner::C45(TreeParams::default()), 1)).unwrap();
        for (_, rep) in &r.owners {
            let p = rep.aggregate.precision.value;
            assert!(p > 0.3 && p < 0.7, "precision {p}");
        }
    }

    #[test]
    fn task_parsing() {
        assert_eq!("multi".parse::<Task>().unwrap(), Task::Multi);
        assert_eq!("owner:Bob".parse::<Task>().unwrap(), Task::Owner("Bob".into()));
        assert!("owner:".parse::<Task>().is_err());
        assert!("pilot".parse::<Task>().is_err());
    }

    #[test]
    fn unknown_owner_fails() {
        let ds = synthetic(1, 40, 2, true);
        assert!(matches!(
            cross_validate(&ds, &Task::Owner("Nobody".into()), &cv(small_rf(), 1)),
            Err(Error::UnknownDriver(_))
        ));
    }

    #[test]
    fn interactions_keep_row_ids() {
        let ds = synthetic(1, 30, 2, true);
        let ids: Vec<usize> = ds.instances().iter().map(|i: &Interaction<f64>| i.row_id).collect();
        assert_eq!(ids, (0..30).collect::<Vec<_>>());
    }
}
