//! Ingestion config: a plain `key = value` text file.
//!
//! ```text
//! # comments start with '#'
//! label_column = driver
//! timestamp_column = time
//! timestamp_format = %Y-%m-%d %H:%M:%S     # or `unix`, `rfc3339`
//! engine_runtime_column = engine_runtime
//! engine_runtime_format = clock             # clock | minutes | seconds
//! exclude = model, car_year
//! categorical = road_type
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimestampFormat {
    /// Integer seconds since 1970-01-01T00:00:00 UTC.
    Unix,
    Rfc3339,
    /// A `chrono` strftime pattern, interpreted as UTC.
    Pattern(String),
}

impl TimestampFormat {
    pub fn parse(&self, cell: &str) -> Option<NaiveDateTime> {
        let cell = cell.trim();
        match self {
            TimestampFormat::Unix => {
                let secs: i64 = cell.parse().ok()?;
                DateTime::from_timestamp(secs, 0).map(|d| d.naive_utc())
            }
            TimestampFormat::Rfc3339 => DateTime::parse_from_rfc3339(cell)
                .ok()
                .map(|d| d.naive_utc()),
            TimestampFormat::Pattern(p) => NaiveDateTime::parse_from_str(cell, p).ok(),
        }
    }

    pub fn format(&self, t: &NaiveDateTime) -> String {
        match self {
            TimestampFormat::Unix => t.and_utc().timestamp().to_string(),
            TimestampFormat::Rfc3339 => t.and_utc().to_rfc3339(),
            TimestampFormat::Pattern(p) => t.format(p).to_string(),
        }
    }
}

impl fmt::Display for TimestampFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimestampFormat::Unix => f.write_str("unix"),
            TimestampFormat::Rfc3339 => f.write_str("rfc3339"),
            TimestampFormat::Pattern(p) => f.write_str(p),
        }
    }
}

impl FromStr for TimestampFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "" => return Err(Error::Config("empty timestamp_format".into())),
            "unix" => TimestampFormat::Unix,
            "rfc3339" => TimestampFormat::Rfc3339,
            p => TimestampFormat::Pattern(p.to_string()),
        })
    }
}

/// How an engine-runtime cell encodes elapsed time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuntimeFormat {
    /// `HH:MM:SS`
    #[default]
    Clock,
    /// Cumulative minutes as a number.
    Minutes,
    /// Cumulative seconds as a number.
    Seconds,
}

impl fmt::Display for RuntimeFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuntimeFormat::Clock => "clock",
            RuntimeFormat::Minutes => "minutes",
            RuntimeFormat::Seconds => "seconds",
        })
    }
}

impl FromStr for RuntimeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "clock" => Ok(RuntimeFormat::Clock),
            "minutes" => Ok(RuntimeFormat::Minutes),
            "seconds" => Ok(RuntimeFormat::Seconds),
            other => Err(Error::Config(format!("unknown engine_runtime_format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub label_column: String,
    pub timestamp_column: Option<String>,
    pub timestamp_format: Option<TimestampFormat>,
    pub engine_runtime_column: Option<String>,
    pub engine_runtime_format: RuntimeFormat,
    pub exclude: Vec<String>,
    pub categorical: Vec<String>,
}

impl IngestConfig {
    pub fn new(label_column: impl Into<String>) -> Self {
        IngestConfig {
            label_column: label_column.into(),
            timestamp_column: None,
            timestamp_format: None,
            engine_runtime_column: None,
            engine_runtime_format: RuntimeFormat::default(),
            exclude: Vec::new(),
            categorical: Vec::new(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = format!("label_column = {}\n", self.label_column);
        if let Some(c) = &self.timestamp_column {
            out.push_str(&format!("timestamp_column = {c}\n"));
        }
        if let Some(f) = &self.timestamp_format {
            out.push_str(&format!("timestamp_format = {f}\n"));
        }
        if let Some(c) = &self.engine_runtime_column {
            out.push_str(&format!("engine_runtime_column = {c}\n"));
            out.push_str(&format!("engine_runtime_format = {}\n", self.engine_runtime_format));
        }
        if !self.exclude.is_empty() {
            out.push_str(&format!("exclude = {}\n", self.exclude.join(", ")));
        }
        if !self.categorical.is_empty() {
            out.push_str(&format!("categorical = {}\n", self.categorical.join(", ")));
        }
        out
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl FromStr for IngestConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut label = None;
        let mut cfg = IngestConfig::new("");
        for (n, raw) in text.lines().enumerate() {
            // '#' always starts a comment, so patterns cannot contain it.
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let value = value.trim();
            match key.trim() {
                "label_column" => label = Some(value.to_string()),
                "timestamp_column" => cfg.timestamp_column = Some(value.to_string()),
                "timestamp_format" => cfg.timestamp_format = Some(value.parse()?),
                "engine_runtime_column" => cfg.engine_runtime_column = Some(value.to_string()),
                "engine_runtime_format" => cfg.engine_runtime_format = value.parse()?,
                "exclude" => cfg.exclude.extend(list(value)),
                "categorical" => cfg.categorical.extend(list(value)),
                other => {
                    return Err(Error::Config(format!("line {}: unknown key `{other}`", n + 1)))
                }
            }
        }
        cfg.label_column = label
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::Config("label_column is required".into()))?;
        if cfg.timestamp_column.is_some() && cfg.timestamp_format.is_none() {
            return Err(Error::Config(
                "timestamp_column requires timestamp_format".into(),
            ));
        }
        Ok(cfg)
    }
}
