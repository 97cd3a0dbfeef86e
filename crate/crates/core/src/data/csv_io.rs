use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{
    Dataset, FeatureDescriptor, FeatureKind, IngestConfig, Interaction, TimeColumns, Value,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cells treated as missing regardless of column kind.
fn is_missing_token(cell: &str) -> bool {
    cell.is_empty() || cell == "?"
}

pub fn read_csv<F: Scalar>(path: impl AsRef<Path>, config: &IngestConfig) -> Result<Dataset<F>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from_reader(file, config)
}

enum Column {
    Predictor(usize),
    Label,
    Timestamp,
    Runtime,
    Skip,
}

pub fn read_csv_from_reader<F: Scalar, R: Read>(
    reader: R,
    config: &IngestConfig,
) -> Result<Dataset<F>> {
    read_impl(reader, config, false)
}

/// Placeholder class of rows read by [`read_unlabeled_csv`].
pub const UNLABELED: &str = "?";

/// Reads rows to be classified. The label column may be absent and is
/// ignored when present; every row gets the [`UNLABELED`] class. A header
/// with no rows gives an empty dataset.
pub fn read_unlabeled_csv<F: Scalar, R: Read>(reader: R, config: &IngestConfig) -> Result<Dataset<F>> {
    read_impl(reader, config, true)
}

fn read_impl<F: Scalar, R: Read>(reader: R, config: &IngestConfig, unlabeled: bool) -> Result<Dataset<F>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Schema("missing header row".into()));
    }
    let mut seen = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if seen.insert(h.as_str(), i).is_some() {
            return Err(Error::Schema(format!("duplicate column `{h}`")));
        }
    }
    let require = |name: &str, what: &str| {
        if seen.contains_key(name) {
            Ok(())
        } else {
            Err(Error::Schema(format!("{what} column `{name}` not found in header")))
        }
    };
    if !unlabeled {
        require(&config.label_column, "label")?;
    }
    if let Some(t) = &config.timestamp_column {
        require(t, "timestamp")?;
    }
    if let Some(r) = &config.engine_runtime_column {
        require(r, "engine runtime")?;
    }
    for c in &config.categorical {
        require(c, "categorical")?;
    }
    for c in &config.exclude {
        require(c, "excluded")?;
    }

    let mut schema = Vec::new();
    let columns: Vec<Column> = header
        .iter()
        .map(|h| {
            if *h == config.label_column {
                if unlabeled {
                    Column::Skip
                } else {
                    Column::Label
                }
            } else if config.timestamp_column.as_deref() == Some(h.as_str()) {
                Column::Timestamp
            } else if config.engine_runtime_column.as_deref() == Some(h.as_str()) {
                Column::Runtime
            } else if config.exclude.contains(h) {
                Column::Skip
            } else {
                let idx = schema.len();
                schema.push(if config.categorical.contains(h) {
                    FeatureDescriptor::categorical(h.clone(), idx, Vec::new())
                } else {
                    FeatureDescriptor::numeric(h.clone(), idx)
                });
                Column::Predictor(idx)
            }
        })
        .collect();

    let ts_format = config.timestamp_format.clone();
    let mut level_index: Vec<HashMap<String, u32>> = vec![HashMap::new(); schema.len()];
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut classes = Vec::new();
    let mut instances = Vec::new();

    for (row_id, record) in rdr.records().enumerate() {
        let record = record?;
        let mut values = vec![Value::Missing; schema.len()];
        let mut class = None;
        let mut timestamp = None;
        let mut engine_runtime = None;
        for (cell, col) in record.iter().zip(&columns) {
            match *col {
                Column::Predictor(i) => {
                    if is_missing_token(cell) {
                        continue;
                    }
                    values[i] = match schema[i].kind {
                        FeatureKind::Numeric => match cell.parse::<F>() {
                            Ok(x) if x.is_finite() => Value::Num(x),
                            _ => Value::Missing,
                        },
                        FeatureKind::Categorical => {
                            let levels = &mut schema[i].levels;
                            let id = *level_index[i].entry(cell.to_string()).or_insert_with(|| {
                                levels.push(cell.to_string());
                                (levels.len() - 1) as u32
                            });
                            Value::Cat(id)
                        }
                    };
                }
                Column::Label => {
                    if cell.is_empty() {
                        return Err(Error::Schema(format!("row {}: empty label", row_id + 1)));
                    }
                    let next = classes.len();
                    let c = *class_index.entry(cell.to_string()).or_insert(next);
                    if c == next {
                        classes.push(cell.to_string());
                    }
                    class = Some(c);
                }
                Column::Timestamp => {
                    timestamp = ts_format.as_ref().and_then(|f| f.parse(cell));
                }
                Column::Runtime => {
                    if !is_missing_token(cell) {
                        engine_runtime = Some(cell.to_string());
                    }
                }
                Column::Skip => {}
            }
        }
        let class = if unlabeled { Some(0) } else { class };
        let class = class.ok_or_else(|| {
            Error::Schema(format!("row {}: label cell missing", row_id + 1))
        })?;
        instances.push(Interaction {
            row_id,
            values,
            class,
            timestamp,
            engine_runtime,
        });
    }
    if instances.is_empty() && !unlabeled {
        return Err(Error::EmptyDataset);
    }
    if unlabeled {
        classes = vec![UNLABELED.to_string()];
    }

    let time_columns = TimeColumns {
        timestamp: config
            .timestamp_column
            .clone()
            .zip(config.timestamp_format.clone()),
        engine_runtime: config
            .engine_runtime_column
            .clone()
            .map(|c| (c, config.engine_runtime_format)),
    };
    Ok(Dataset::new(schema, config.label_column.clone(), classes, instances)?
        .with_time_columns(time_columns))
}

/// Writes predictors, then the raw timestamp/runtime columns if the
/// dataset has them, then the label. Missing cells are empty.
pub fn write_csv<F: Scalar, W: Write>(dataset: &Dataset<F>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let tc = dataset.time_columns();
    let mut header: Vec<&str> = dataset.schema().iter().map(|f| f.name.as_str()).collect();
    if let Some((name, _)) = &tc.timestamp {
        header.push(name);
    }
    if let Some((name, _)) = &tc.engine_runtime {
        header.push(name);
    }
    header.push(dataset.label_name());
    w.write_record(&header)?;

    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for inst in dataset.instances() {
        row.clear();
        for (v, f) in inst.values.iter().zip(dataset.schema()) {
            row.push(match v {
                Value::Num(x) => x.to_string(),
                Value::Cat(c) => f.levels[*c as usize].clone(),
                Value::Missing => String::new(),
            });
        }
        if let Some((_, fmt)) = &tc.timestamp {
            row.push(inst.timestamp.map(|t| fmt.format(&t)).unwrap_or_default());
        }
        if tc.engine_runtime.is_some() {
            row.push(inst.engine_runtime.clone().unwrap_or_default());
        }
        row.push(dataset.label_of(inst).to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
