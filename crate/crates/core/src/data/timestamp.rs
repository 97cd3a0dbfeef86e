//! Timestamp decomposition into calendar features.

use chrono::{Datelike, NaiveDateTime, Timelike};

use super::{Dataset, FeatureDescriptor, Interaction, RuntimeFormat, Value};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Calendar features appended for a native timestamp, in append order.
pub const TIMESTAMP_FEATURES: [&str; 7] =
    ["second", "minute", "hour", "day_of_week", "day", "month", "year"];

/// Feature appended when an engine-runtime column is present.
pub const RUNTIME_FEATURE: &str = "engine_runtime_minute";

fn calendar_fields(t: &NaiveDateTime) -> [i64; 7] {
    [
        t.second() as i64,
        t.minute() as i64,
        t.hour() as i64,
        // ISO: Monday = 1 .. Sunday = 7
        t.weekday().number_from_monday() as i64,
        t.day() as i64,
        t.month() as i64,
        t.year() as i64,
    ]
}

/// Minute-of-hour carried by an engine-runtime cell.
pub fn runtime_minute(cell: &str, format: RuntimeFormat) -> Option<u32> {
    let cell = cell.trim();
    match format {
        RuntimeFormat::Clock => {
            let parts: Vec<&str> = cell.split(':').collect();
            if parts.len() != 3 {
                return None;
            }
            let minute: u32 = parts[1].trim().parse().ok()?;
            (minute < 60).then_some(minute)
        }
        RuntimeFormat::Minutes | RuntimeFormat::Seconds => {
            let x: f64 = cell.parse().ok()?;
            if !x.is_finite() || x < 0.0 {
                return None;
            }
            let minutes = match format {
                RuntimeFormat::Seconds => (x / 60.0).floor(),
                _ => x.floor(),
            };
            Some((minutes % 60.0) as u32)
        }
    }
}

/// Appends timestamp-correlated features: the seven calendar fields when the
/// dataset has a timestamp column, plus `engine_runtime_minute` when it has
/// an engine-runtime column. Existing columns are untouched. Rows whose
/// timestamp or runtime did not parse get missing values.
pub fn decompose_timestamp<F: Scalar>(dataset: &Dataset<F>) -> Result<Dataset<F>> {
    let tc = dataset.time_columns().clone();
    let has_timestamp = tc.timestamp.is_some();
    let runtime = tc.engine_runtime.as_ref().map(|(_, f)| *f);
    if !has_timestamp && runtime.is_none() {
        return Err(Error::Precondition(
            "dataset has neither a timestamp nor an engine_runtime column".into(),
        ));
    }

    let mut schema = dataset.schema().to_vec();
    let mut added: Vec<&str> = Vec::new();
    if has_timestamp {
        added.extend(TIMESTAMP_FEATURES);
    }
    if runtime.is_some() {
        added.push(RUNTIME_FEATURE);
    }
    for name in &added {
        if dataset.feature_index(name).is_some() {
            return Err(Error::Schema(format!(
                "feature `{name}` already exists; dataset decomposed twice?"
            )));
        }
        let mut f = FeatureDescriptor::numeric(*name, schema.len());
        f.timestamp_correlated = true;
        schema.push(f);
    }

    let instances = dataset
        .instances()
        .iter()
        .map(|inst| {
            let mut values = inst.values.clone();
            if has_timestamp {
                match &inst.timestamp {
                    Some(t) => values.extend(
                        calendar_fields(t)
                            .iter()
                            .map(|&v| Value::Num(F::lit(v as f64))),
                    ),
                    None => values.extend([Value::Missing; 7]),
                }
            }
            if let Some(fmt) = runtime {
                values.push(
                    inst.engine_runtime
                        .as_deref()
                        .and_then(|c| runtime_minute(c, fmt))
                        .map_or(Value::Missing, |m| Value::Num(F::lit(m as f64))),
                );
            }
            Interaction {
                values,
                ..inst.clone()
            }
        })
        .collect();

    Ok(Dataset::new(
        schema,
        dataset.label_name(),
        dataset.classes().to_vec(),
        instances,
    )?
    .with_time_columns(tc))
}
