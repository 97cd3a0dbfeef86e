//! Model bundles: a directory holding the serialized classifier, the model
//! metadata, the feature selection report and a digest manifest.
//!
//! ```text
//! bundle/
//!   classifier.json   tree or forest document
//!   model.json        task, learner, seed, input schema, selection
//!   selection.txt     human-readable selection table
//!   selection.csv
//!   manifest.txt      "<sha256>  <file>" per file, plus seed and task
//! ```
//!
//! Callers may add extra files (an ingest config, the run config); they are
//! listed in the manifest like the rest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Classifier, FittedModel, Learner, MultiDriverModel, OwnerModel};
use crate::data::FeatureDescriptor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::selection::SelectionReport;

pub const BUNDLE_FORMAT: &str = "drivid-bundle";
pub const BUNDLE_FORMAT_VERSION: u32 = 1;

const CLASSIFIER_FILE: &str = "classifier.json";
const MODEL_FILE: &str = "model.json";
const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub enum Bundle<F> {
    Owner(OwnerModel<F>),
    Multi(MultiDriverModel<F>),
}

impl<F: Scalar> Bundle<F> {
    pub fn fitted(&self) -> &FittedModel<F> {
        match self {
            Bundle::Owner(m) => &m.fitted,
            Bundle::Multi(m) => &m.fitted,
        }
    }

    pub fn task_name(&self) -> String {
        match self {
            Bundle::Owner(m) => format!("owner:{}", m.owner_id),
            Bundle::Multi(_) => "multi".to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    format: String,
    version: u32,
    task: String,
    owner: Option<String>,
    learner: Learner,
    seed: u64,
    training_fingerprint: String,
    input_schema: Vec<FeatureDescriptor>,
    selection: SelectionReport,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

/// Writes the bundle and returns its digest (SHA-256 of the manifest).
pub fn write_bundle<F: Scalar>(
    dir: impl AsRef<Path>,
    bundle: &Bundle<F>,
    extras: &[(&str, &str)],
) -> Result<String> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fitted = bundle.fitted();
    let meta = ModelMeta {
        format: BUNDLE_FORMAT.to_string(),
        version: BUNDLE_FORMAT_VERSION,
        task: bundle.task_name(),
        owner: match bundle {
            Bundle::Owner(m) => Some(m.owner_id.clone()),
            Bundle::Multi(_) => None,
        },
        learner: fitted.learner,
        seed: fitted.seed,
        training_fingerprint: fitted.training_fingerprint.clone(),
        input_schema: fitted.input_schema.clone(),
        selection: fitted.selection.clone(),
    };
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    files.insert(CLASSIFIER_FILE.into(), fitted.classifier.to_json()?);
    files.insert(MODEL_FILE.into(), serde_json::to_string_pretty(&meta)? + "\n");
    files.insert("selection.txt".into(), fitted.selection.to_text());
    files.insert("selection.csv".into(), fitted.selection.to_csv()?);
    for (name, contents) in extras {
        if files.contains_key(*name) || *name == MANIFEST_FILE || name.contains(['/', '\\']) {
            return Err(Error::InvalidParameter(format!("bad extra bundle file name `{name}`")));
        }
        files.insert(name.to_string(), contents.to_string());
    }
    let mut manifest = format!(
        "format {BUNDLE_FORMAT}\nversion {BUNDLE_FORMAT_VERSION}\ntask {}\nlearner {}\nseed {}\n",
        meta.task, meta.learner, meta.seed
    );
    for (name, contents) in &files {
        write_file(dir, name, contents)?;
        manifest.push_str(&format!("{}  {name}\n", sha256_hex(contents.as_bytes())));
    }
    write_file(dir, MANIFEST_FILE, &manifest)?;
    Ok(sha256_hex(manifest.as_bytes()))
}

/// Loads a bundle, verifying every file against the manifest. Returns the
/// extra files by name.
pub fn read_bundle<F: Scalar>(dir: impl AsRef<Path>) -> Result<(Bundle<F>, BTreeMap<String, String>)> {
    let dir = dir.as_ref();
    let manifest = read_file(dir, MANIFEST_FILE)?;
    let mut contents: BTreeMap<String, String> = BTreeMap::new();
    for line in manifest.lines() {
        let Some((digest, name)) = line.split_once("  ") else {
            continue;
        };
        let text = read_file(dir, name)?;
        if sha256_hex(text.as_bytes()) != digest {
            return Err(Error::Format(format!("bundle file `{name}` does not match its manifest digest")));
        }
        contents.insert(name.to_string(), text);
    }
    let take = |contents: &mut BTreeMap<String, String>, name: &str| {
        contents
            .remove(name)
            .ok_or_else(|| Error::Format(format!("bundle manifest does not list `{name}`")))
    };
    let meta: ModelMeta = serde_json::from_str(&take(&mut contents, MODEL_FILE)?)?;
    if meta.format != BUNDLE_FORMAT || meta.version != BUNDLE_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported bundle `{}` version {}",
            meta.format, meta.version
        )));
    }
    let classifier = Classifier::<F>::from_json(&take(&mut contents, CLASSIFIER_FILE)?)?;
    let kept_ok = meta.selection.subset.kept.len() == classifier.features().len()
        && meta
            .selection
            .subset
            .kept
            .iter()
            .zip(classifier.features())
            .all(|(&f, d)| meta.input_schema.get(f).is_some_and(|s| s.name == d.name));
    if !kept_ok {
        return Err(Error::Format("classifier features do not match the selected subset".into()));
    }
    contents.remove("selection.txt");
    contents.remove("selection.csv");
    let fitted = FittedModel {
        input_schema: meta.input_schema,
        selection: meta.selection,
        classifier,
        learner: meta.learner,
        seed: meta.seed,
        training_fingerprint: meta.training_fingerprint,
    };
    let bundle = match meta.owner {
        Some(owner_id) => Bundle::Owner(OwnerModel { owner_id, fitted }),
        None => Bundle::Multi(MultiDriverModel { fitted }),
    };
    Ok((bundle, contents))
}
