//! Owner-model generation, owner identification and multi-driver
//! classification.
//!
//! Both tasks follow the same recipe: rank and select features on the
//! training data only, project onto the kept features, train the learner.

mod bundle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureDescriptor, Interaction, Value, OWNER_LABEL};
use crate::error::{Error, Result};
use crate::forest::{train_forest, Forest, ForestParams, FOREST_FORMAT};
use crate::scalar::Scalar;
use crate::selection::{select_features, FsMode, SelectionReport};
use crate::tree::{train_c45, DecisionTree, TreeParams, TREE_FORMAT};

pub use bundle::{read_bundle, write_bundle, Bundle, BUNDLE_FORMAT, BUNDLE_FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    C45(TreeParams),
    RandomForest(ForestParams),
}

impl Default for Learner {
    fn default() -> Self {
        Learner::RandomForest(ForestParams::default())
    }
}

impl Learner {
    pub fn name(&self) -> &'static str {
        match self {
            Learner::C45(_) => "c45",
            Learner::RandomForest(_) => "rf",
        }
    }

    pub fn train<F: Scalar>(&self, data: &Dataset<F>, seed: u64) -> Result<Classifier<F>> {
        match self {
            Learner::C45(p) => train_c45(data, p).map(Classifier::Tree),
            Learner::RandomForest(p) => train_forest(data, p, seed).map(Classifier::Forest),
        }
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Learner {
    type Err = Error;

    /// `c45` or `rf`, with default hyperparameters.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c45" | "j48" => Ok(Learner::C45(TreeParams::default())),
            "rf" | "random_forest" => Ok(Learner::RandomForest(ForestParams::default())),
            other => Err(Error::Config(format!("unknown learner `{other}` (expected c45 or rf)"))),
        }
    }
}

/// A trained tree or forest.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier<F> {
    Tree(DecisionTree<F>),
    Forest(Forest<F>),
}

impl<F: Scalar> Classifier<F> {
    pub fn features(&self) -> &[FeatureDescriptor] {
        match self {
            Classifier::Tree(t) => t.features(),
            Classifier::Forest(f) => f.features(),
        }
    }

    pub fn classes(&self) -> &[String] {
        match self {
            Classifier::Tree(t) => t.classes(),
            Classifier::Forest(f) => f.classes(),
        }
    }

    /// Predicted class index with the leaf-mass or vote share behind it.
    pub fn predict(&self, values: &[Value<F>]) -> Result<(usize, f64)> {
        match self {
            Classifier::Tree(t) => t.predict(values).map(|p| (p.class, p.confidence.to_f64_lossy())),
            Classifier::Forest(f) => f.predict(values).map(|p| (p.class, p.vote_share)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        match self {
            Classifier::Tree(t) => t.to_json(),
            Classifier::Forest(f) => f.to_json(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
        }
        let header: Header = serde_json::from_str(text)?;
        match header.format.as_str() {
            TREE_FORMAT => DecisionTree::from_json(text).map(Classifier::Tree),
            FOREST_FORMAT => Forest::from_json(text).map(Classifier::Forest),
            other => Err(Error::Format(format!("unknown classifier format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub learner: Learner,
    pub fs_mode: FsMode,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            learner: Learner::default(),
            fs_mode: FsMode::Paradigm,
            seed: 0,
        }
    }
}

/// Called with exactly the data feature selection is about to read.
pub type SelectionProbe<'a, F> = &'a (dyn Fn(&Dataset<F>) + Sync);

/// Selection plus classifier over the kept features, remembering the full
/// input schema it was trained from.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<F> {
    pub input_schema: Vec<FeatureDescriptor>,
    pub selection: SelectionReport,
    pub classifier: Classifier<F>,
    pub learner: Learner,
    pub seed: u64,
    /// Dataset digest and seed, `"<sha256>:<seed>"`.
    pub training_fingerprint: String,
}

impl<F: Scalar> FittedModel<F> {
    pub(crate) fn fit(
        labeled: &Dataset<F>,
        config: &PipelineConfig,
        probe: Option<SelectionProbe<'_, F>>,
    ) -> Result<Self> {
        if let Some(p) = probe {
            p(labeled);
        }
        let (ranking, subset) = select_features(labeled, config.fs_mode)?;
        if subset.kept.is_empty() {
            return Err(Error::NoFeatures);
        }
        let projected = labeled.project(&subset.kept)?;
        let classifier = config.learner.train(&projected, config.seed)?;
        Ok(FittedModel {
            input_schema: labeled.schema().to_vec(),
            selection: SelectionReport { ranking, subset },
            classifier,
            learner: config.learner,
            seed: config.seed,
            training_fingerprint: format!("{}:{}", labeled.fingerprint(), config.seed),
        })
    }

    /// Prediction for values laid out like the training input schema.
    pub fn predict_input(&self, values: &[Value<F>]) -> Result<(usize, f64)> {
        if values.len() != self.input_schema.len() {
            return Err(Error::Schema(format!(
                "instance has {} values, model input has {}",
                values.len(),
                self.input_schema.len()
            )));
        }
        let kept: Vec<Value<F>> = self.selection.subset.kept.iter().map(|&f| values[f]).collect();
        self.classifier.predict(&kept)
    }

    /// Predictions for every row of a dataset with any column layout;
    /// columns are matched by name.
    pub fn predict_dataset(&self, data: &Dataset<F>) -> Result<Vec<(usize, f64)>> {
        let bound = data.rebind(self.classifier.features())?;
        bound
            .instances()
            .iter()
            .map(|inst| self.classifier.predict(&inst.values))
            .collect()
    }

    pub fn kept_names(&self) -> Vec<String> {
        self.classifier.features().iter().map(|f| f.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OwnerModel<F> {
    pub owner_id: String,
    pub fitted: FittedModel<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiDriverModel<F> {
    pub fitted: FittedModel<F>,
}

impl<F: Scalar> MultiDriverModel<F> {
    pub fn class_order(&self) -> &[String] {
        self.fitted.classifier.classes()
    }
}

pub fn generate_model<F: Scalar>(
    dataset: &Dataset<F>,
    owner: &str,
    config: &PipelineConfig,
) -> Result<OwnerModel<F>> {
    generate_model_probed(dataset, owner, config, None)
}

pub fn generate_model_probed<F: Scalar>(
    dataset: &Dataset<F>,
    owner: &str,
    config: &PipelineConfig,
    probe: Option<SelectionProbe<'_, F>>,
) -> Result<OwnerModel<F>> {
    let labeled = dataset.label_for_owner(owner)?;
    Ok(OwnerModel {
        owner_id: owner.to_string(),
        fitted: FittedModel::fit(&labeled, config, probe)?,
    })
}

/// Whether the interaction (in the training input layout) belongs to the
/// owner, with the classifier's confidence in its answer.
pub fn identify<F: Scalar>(model: &OwnerModel<F>, interaction: &Interaction<F>) -> Result<(bool, f64)> {
    let (class, confidence) = model.fitted.predict_input(&interaction.values)?;
    Ok((model.fitted.classifier.classes()[class] == OWNER_LABEL, confidence))
}

pub fn train_multi_driver<F: Scalar>(dataset: &Dataset<F>, config: &PipelineConfig) -> Result<MultiDriverModel<F>> {
    train_multi_driver_probed(dataset, config, None)
}

/// Classes are put in lexicographic order first, so the model does not
/// depend on the order driver ids appear in the input.
pub fn train_multi_driver_probed<F: Scalar>(
    dataset: &Dataset<F>,
    config: &PipelineConfig,
    probe: Option<SelectionProbe<'_, F>>,
) -> Result<MultiDriverModel<F>> {
    let present = dataset.n_present_classes();
    if present < 2 {
        return Err(Error::TooFewClasses { found: present });
    }
    let canonical = dataset.with_sorted_classes();
    Ok(MultiDriverModel {
        fitted: FittedModel::fit(&canonical, config, probe)?,
    })
}

pub fn predict_driver<'m, F: Scalar>(
    model: &'m MultiDriverModel<F>,
    interaction: &Interaction<F>,
) -> Result<(&'m str, f64)> {
    let (class, confidence) = model.fitted.predict_input(&interaction.values)?;
    Ok((&model.class_order()[class], confidence))
}
