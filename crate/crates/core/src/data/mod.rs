//! Driver-interaction datasets: schema, instances and the row/column
//! operations the pipeline needs (owner labeling, sparse-driver exclusion,
//! projection, fold partitioning).

mod csv_io;
mod folds;
mod ingest;
mod timestamp;

use std::collections::HashMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use csv_io::{read_csv, read_csv_from_reader, read_unlabeled_csv, write_csv, UNLABELED};
pub use folds::{split_folds, FoldPlan};
pub use ingest::{IngestConfig, RuntimeFormat, TimestampFormat};
pub use timestamp::{decompose_timestamp, runtime_minute, TIMESTAMP_FEATURES, RUNTIME_FEATURE};

/// Class label used for the vehicle owner in binary datasets.
pub const OWNER_LABEL: &str = "1";
/// Class label used for everybody else in binary datasets.
pub const OTHER_LABEL: &str = "0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// Column metadata for one predictor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    pub timestamp_correlated: bool,
    pub index: usize,
    /// Interned category tokens; `Value::Cat(i)` refers to `levels[i]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl FeatureDescriptor {
    pub fn numeric(name: impl Into<String>, index: usize) -> Self {
        FeatureDescriptor {
            name: name.into(),
            kind: FeatureKind::Numeric,
            timestamp_correlated: false,
            index,
            levels: Vec::new(),
        }
    }

    pub fn categorical(name: impl Into<String>, index: usize, levels: Vec<String>) -> Self {
        FeatureDescriptor {
            name: name.into(),
            kind: FeatureKind::Categorical,
            timestamp_correlated: false,
            index,
            levels,
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.kind == FeatureKind::Numeric
    }
}

/// A single cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<F> {
    Num(F),
    Cat(u32),
    Missing,
}

impl<F: Copy> Value<F> {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_num(&self) -> Option<F> {
        match *self {
            Value::Num(x) => Some(x),
            _ => None,
        }
    }
}

/// One timestamped sensor record and the driver that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction<F> {
    /// Position of the record in the source file; survives row selection.
    pub row_id: usize,
    pub values: Vec<Value<F>>,
    /// Index into [`Dataset::classes`].
    pub class: usize,
    pub timestamp: Option<NaiveDateTime>,
    pub engine_runtime: Option<String>,
}

/// Where the raw timestamp and engine runtime came from, kept so a dataset
/// can be re-emitted and decomposed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeColumns {
    pub timestamp: Option<(String, TimestampFormat)>,
    pub engine_runtime: Option<(String, RuntimeFormat)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    schema: Vec<FeatureDescriptor>,
    instances: Vec<Interaction<F>>,
    label_name: String,
    classes: Vec<String>,
    time_columns: TimeColumns,
}

/// Drivers removed by [`Dataset::exclude_sparse_drivers`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionReport {
    pub min_instances: usize,
    pub excluded: Vec<(String, usize)>,
    pub retained: Vec<(String, usize)>,
}

impl ExclusionReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("min_instances {}\n", self.min_instances);
        for (d, n) in &self.excluded {
            out.push_str(&format!("excluded {d} {n}\n"));
        }
        for (d, n) in &self.retained {
            out.push_str(&format!("retained {d} {n}\n"));
        }
        out
    }
}

impl<F: Scalar> Dataset<F> {
    /// Assembles a dataset, checking that every instance fits the schema.
    pub fn new(
        schema: Vec<FeatureDescriptor>,
        label_name: impl Into<String>,
        classes: Vec<String>,
        instances: Vec<Interaction<F>>,
    ) -> Result<Self> {
        let ds = Dataset {
            schema,
            instances,
            label_name: label_name.into(),
            classes,
            time_columns: TimeColumns::default(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Convenience constructor for all-numeric data; class labels are
    /// interned in first-seen order.
    pub fn from_numeric_rows<S: AsRef<str>>(
        names: &[&str],
        label_name: &str,
        rows: &[(Vec<F>, S)],
    ) -> Result<Self> {
        let schema = names
            .iter()
            .enumerate()
            .map(|(i, n)| FeatureDescriptor::numeric(*n, i))
            .collect();
        let mut classes: Vec<String> = Vec::new();
        let mut instances = Vec::with_capacity(rows.len());
        for (row_id, (vals, label)) in rows.iter().enumerate() {
            let label = label.as_ref();
            let class = match classes.iter().position(|c| c == label) {
                Some(c) => c,
                None => {
                    classes.push(label.to_string());
                    classes.len() - 1
                }
            };
            let values = vals
                .iter()
                .map(|&v| if v.is_finite() { Value::Num(v) } else { Value::Missing })
                .collect();
            instances.push(Interaction {
                row_id,
                values,
                class,
                timestamp: None,
                engine_runtime: None,
            });
        }
        Dataset::new(schema, label_name, classes, instances)
    }

    pub(crate) fn with_time_columns(mut self, time_columns: TimeColumns) -> Self {
        self.time_columns = time_columns;
        self
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, f) in self.schema.iter().enumerate() {
            if f.index != i {
                return Err(Error::Schema(format!(
                    "feature `{}` has index {} at position {i}",
                    f.name, f.index
                )));
            }
            if seen.insert(f.name.as_str(), i).is_some() {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
        }
        let width = self.schema.len();
        for inst in &self.instances {
            if inst.values.len() != width {
                return Err(Error::Schema(format!(
                    "row {} has {} values, schema has {width}",
                    inst.row_id,
                    inst.values.len()
                )));
            }
            if inst.class >= self.classes.len() {
                return Err(Error::Schema(format!("row {} has unknown class", inst.row_id)));
            }
            for (v, f) in inst.values.iter().zip(&self.schema) {
                match (v, f.kind) {
                    (Value::Num(x), FeatureKind::Numeric) if x.is_finite() => {}
                    (Value::Cat(c), FeatureKind::Categorical) if (*c as usize) < f.levels.len() => {}
                    (Value::Missing, _) => {}
                    _ => {
                        return Err(Error::Schema(format!(
                            "row {} has an invalid value for `{}`",
                            inst.row_id, f.name
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &[FeatureDescriptor] {
        &self.schema
    }

    pub fn instances(&self) -> &[Interaction<F>] {
        &self.instances
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    /// Class labels in first-seen order; this is the tie-break order.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn time_columns(&self) -> &TimeColumns {
        &self.time_columns
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn n_predictors(&self) -> usize {
        self.schema.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|f| f.name == name)
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn label_of(&self, inst: &Interaction<F>) -> &str {
        &self.classes[inst.class]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for inst in &self.instances {
            counts[inst.class] += 1;
        }
        counts
    }

    /// Number of classes with at least one instance.
    pub fn n_present_classes(&self) -> usize {
        self.class_counts().iter().filter(|&&c| c > 0).count()
    }

    pub fn require_trainable(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if self.schema.is_empty() {
            return Err(Error::NoFeatures);
        }
        Ok(())
    }

    /// Relabels instances as owner (`"1"`) versus everybody else (`"0"`).
    ///
    /// The class order is `["0", "1"]`, so unresolved ties go to "not the
    /// owner".
    pub fn label_for_owner(&self, owner: &str) -> Result<Self> {
        let owner_class = self
            .class_index(owner)
            .filter(|&c| self.instances.iter().any(|i| i.class == c))
            .ok_or_else(|| Error::UnknownDriver(owner.to_string()))?;
        let instances = self
            .instances
            .iter()
            .map(|inst| Interaction {
                class: usize::from(inst.class == owner_class),
                ..inst.clone()
            })
            .collect();
        Ok(Dataset {
            schema: self.schema.clone(),
            instances,
            label_name: self.label_name.clone(),
            classes: vec![OTHER_LABEL.to_string(), OWNER_LABEL.to_string()],
            time_columns: self.time_columns.clone(),
        })
    }

    /// Drops every driver with fewer than `min_instances` rows.
    pub fn exclude_sparse_drivers(&self, min_instances: usize) -> Result<(Self, ExclusionReport)> {
        if min_instances == 0 {
            return Err(Error::InvalidParameter("min_instances must be >= 1".into()));
        }
        let counts = self.class_counts();
        let mut remap = vec![None; self.classes.len()];
        let mut classes = Vec::new();
        let mut excluded = Vec::new();
        let mut retained = Vec::new();
        for (c, (&n, label)) in counts.iter().zip(&self.classes).enumerate() {
            if n >= min_instances {
                remap[c] = Some(classes.len());
                classes.push(label.clone());
                retained.push((label.clone(), n));
            } else if n > 0 {
                excluded.push((label.clone(), n));
            }
        }
        if classes.len() < 2 {
            return Err(Error::TooFewClasses {
                found: classes.len(),
            });
        }
        let instances = self
            .instances
            .iter()
            .filter_map(|inst| {
                remap[inst.class].map(|class| Interaction {
                    class,
                    ..inst.clone()
                })
            })
            .collect();
        let ds = Dataset {
            schema: self.schema.clone(),
            instances,
            label_name: self.label_name.clone(),
            classes,
            time_columns: self.time_columns.clone(),
        };
        Ok((
            ds,
            ExclusionReport {
                min_instances,
                excluded,
                retained,
            },
        ))
    }

    /// Rows at the given positions, in the given order. Class list is kept
    /// intact so class indices stay comparable across subsets.
    pub fn select_rows(&self, positions: &[usize]) -> Self {
        Dataset {
            schema: self.schema.clone(),
            instances: positions.iter().map(|&p| self.instances[p].clone()).collect(),
            label_name: self.label_name.clone(),
            classes: self.classes.clone(),
            time_columns: self.time_columns.clone(),
        }
    }

    /// Same rows with the class list in lexicographic order.
    pub fn with_sorted_classes(&self) -> Self {
        let mut order: Vec<usize> = (0..self.classes.len()).collect();
        order.sort_by(|&a, &b| self.classes[a].cmp(&self.classes[b]));
        let mut remap = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        Dataset {
            schema: self.schema.clone(),
            instances: self
                .instances
                .iter()
                .map(|inst| Interaction {
                    class: remap[inst.class],
                    ..inst.clone()
                })
                .collect(),
            label_name: self.label_name.clone(),
            classes: order.iter().map(|&c| self.classes[c].clone()).collect(),
            time_columns: self.time_columns.clone(),
        }
    }

    /// Keeps only the listed predictor columns, in the listed order.
    pub fn project(&self, features: &[usize]) -> Result<Self> {
        if let Some(&bad) = features.iter().find(|&&f| f >= self.schema.len()) {
            return Err(Error::InvalidParameter(format!("feature index {bad} out of range")));
        }
        let schema = features
            .iter()
            .enumerate()
            .map(|(i, &f)| FeatureDescriptor {
                index: i,
                ..self.schema[f].clone()
            })
            .collect();
        let instances = self
            .instances
            .iter()
            .map(|inst| Interaction {
                values: features.iter().map(|&f| inst.values[f]).collect(),
                ..inst.clone()
            })
            .collect();
        Dataset::new(schema, self.label_name.clone(), self.classes.clone(), instances)
            .map(|d| d.with_time_columns(self.time_columns.clone()))
    }

    /// Re-expresses this dataset in `target`'s column layout, matching
    /// columns by name and categorical tokens by text. Tokens the target
    /// has never seen become missing.
    pub fn rebind(&self, target: &[FeatureDescriptor]) -> Result<Self> {
        let mut sources = Vec::with_capacity(target.len());
        let mut missing = Vec::new();
        for f in target {
            match self.feature_index(&f.name) {
                Some(i) if self.schema[i].kind == f.kind => sources.push(i),
                Some(_) => {
                    return Err(Error::Schema(format!(
                        "feature `{}` has a different kind than the model expects",
                        f.name
                    )))
                }
                None => missing.push(f.name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::SchemaMismatch { missing });
        }
        let level_maps: Vec<Option<Vec<Option<u32>>>> = target
            .iter()
            .zip(&sources)
            .map(|(t, &s)| {
                (t.kind == FeatureKind::Categorical).then(|| {
                    self.schema[s]
                        .levels
                        .iter()
                        .map(|tok| t.levels.iter().position(|l| l == tok).map(|p| p as u32))
                        .collect()
                })
            })
            .collect();
        let instances = self
            .instances
            .iter()
            .map(|inst| {
                let values = sources
                    .iter()
                    .zip(&level_maps)
                    .map(|(&s, map)| match (inst.values[s], map) {
                        (Value::Cat(c), Some(m)) => m[c as usize].map_or(Value::Missing, Value::Cat),
                        (v, _) => v,
                    })
                    .collect();
                Interaction {
                    values,
                    ..inst.clone()
                }
            })
            .collect();
        Ok(Dataset {
            schema: target.to_vec(),
            instances,
            label_name: self.label_name.clone(),
            classes: self.classes.clone(),
            time_columns: self.time_columns.clone(),
        })
    }

    /// Content digest over schema, labels and every cell (hex SHA-256).
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.schema {
            h.update(f.name.as_bytes());
            h.update([0u8, f.kind as u8, f.timestamp_correlated as u8]);
            for l in &f.levels {
                h.update(l.as_bytes());
                h.update([0u8]);
            }
        }
        h.update(self.label_name.as_bytes());
        for c in &self.classes {
            h.update(c.as_bytes());
            h.update([0u8]);
        }
        for inst in &self.instances {
            h.update((inst.class as u64).to_le_bytes());
            for v in &inst.values {
                match v {
                    Value::Num(x) => {
                        h.update([1u8]);
                        h.update(x.to_f64_lossy().to_bits().to_le_bytes());
                    }
                    Value::Cat(c) => {
                        h.update([2u8]);
                        h.update(c.to_le_bytes());
                    }
                    Value::Missing => h.update([3u8]),
                }
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drivers(a: usize, b: usize) -> Dataset<f64> {
        let rows: Vec<(Vec<f64>, &str)> = (0..a)
            .map(|i| (vec![i as f64], "A"))
            .chain((0..b).map(|i| (vec![100.0 + i as f64], "B")))
            .collect();
        Dataset::from_numeric_rows(&["speed"], "driver", &rows).unwrap()
    }

    fn labels(ds: &Dataset<f64>) -> Vec<&str> {
        ds.instances().iter().map(|i| ds.label_of(i)).collect()
    }

    #[test]
    fn owner_labeling_is_binary_and_symmetric() {
        let ds = drivers(3, 2);
        let a = ds.label_for_owner("A").unwrap();
        assert_eq!(labels(&a), ["1", "1", "1", "0", "0"]);
        let b = ds.label_for_owner("B").unwrap();
        assert_eq!(labels(&b), ["0", "0", "0", "1", "1"]);
        assert_eq!(a.len(), ds.len());
        assert_eq!(a.instances()[4].values, ds.instances()[4].values);
    }

    #[test]
    fn owner_labeling_rejects_unknown_id() {
        let err = drivers(3, 2).label_for_owner("Carol").unwrap_err();
        assert!(matches!(err, Error::UnknownDriver(ref d) if d == "Carol"));
    }

    #[test]
    fn sparse_exclusion() {
        let ds = drivers(5, 5);
        let (same, report) = ds.exclude_sparse_drivers(1).unwrap();
        assert_eq!(same.len(), 10);
        assert!(report.excluded.is_empty());

        assert!(matches!(
            ds.exclude_sparse_drivers(6),
            Err(Error::TooFewClasses { found: 0 })
        ));

        let rows: Vec<(Vec<f64>, &str)> = (0..20)
            .map(|i| (vec![i as f64], ["A", "B", "C"][i % 3]))
            .chain((0..2).map(|i| (vec![i as f64], "D")))
            .collect();
        let ds = Dataset::from_numeric_rows(&["x"], "driver", &rows).unwrap();
        let (kept, report) = ds.exclude_sparse_drivers(5).unwrap();
        assert_eq!(report.excluded, vec![("D".to_string(), 2)]);
        assert_eq!(kept.classes(), ["A", "B", "C"]);
        assert_eq!(kept.len(), 20);
        assert!(report.to_text().contains("excluded D 2"));
    }

    #[test]
    fn projection_and_rebinding() {
        let rows = vec![(vec![1.0, 2.0, 3.0], "A"), (vec![4.0, 5.0, 6.0], "B")];
        let ds = Dataset::from_numeric_rows(&["a", "b", "c"], "driver", &rows).unwrap();
        let p = ds.project(&[2, 0]).unwrap();
        assert_eq!(p.schema()[0].name, "c");
        assert_eq!(p.schema()[1].index, 1);
        assert_eq!(p.instances()[1].values, vec![Value::Num(6.0), Value::Num(4.0)]);

        let back = ds.rebind(p.schema()).unwrap();
        assert_eq!(back.instances()[1].values, p.instances()[1].values);

        let mut wanted = p.schema().to_vec();
        wanted.push(FeatureDescriptor::numeric("zzz", 2));
        match p.rebind(&wanted) {
            Err(Error::SchemaMismatch { missing }) => assert_eq!(missing, ["zzz"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_cells_become_missing() {
        let rows = vec![(vec![f64::NAN], "A"), (vec![f64::INFINITY], "B")];
        let ds = Dataset::from_numeric_rows(&["a"], "d", &rows).unwrap();
        assert!(ds.instances().iter().all(|i| i.values[0].is_missing()));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = drivers(3, 2);
        let b = drivers(3, 2);
        let c = drivers(2, 3);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
