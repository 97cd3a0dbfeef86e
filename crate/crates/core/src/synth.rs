//! Synthetic labeled, timestamped driving corpora from driver profiles.
//!
//! A profile is plain text: global `key = value` settings, then one
//! `[driver NAME]` section per driver.
//!
//! ```text
//! features = speed, rpm
//! weeks = 8                  # calendar span, starting at `start`
//! start = 2024-01-01         # a Monday is convenient but not required
//!
//! [driver Alice]
//! days = all                 # mon-fri, sat,sun, mon-wed,fri ...
//! hours = 8-20               # [8, 20); 22-6 wraps past midnight
//! weight = 1                 # relative share of rows
//! speed = uniform 35 50
//! rpm = normal 2200 300
//! ```

use std::io::Write;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::data::{IngestConfig, TimestampFormat};
use crate::error::{Error, Result};

pub const SYNTH_TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureDistribution {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
}

impl FromStr for FeatureDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let nums = |xs: &[&str]| -> Result<Vec<f64>> {
            xs.iter()
                .map(|x| {
                    x.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Config(format!("bad number `{x}` in `{s}`")))
                })
                .collect()
        };
        match parts.as_slice() {
            ["uniform", a, b] => {
                let v = nums(&[a, b])?;
                if v[0] >= v[1] {
                    return Err(Error::Config(format!("uniform needs low < high in `{s}`")));
                }
                Ok(FeatureDistribution::Uniform { low: v[0], high: v[1] })
            }
            ["normal", a, b] => {
                let v = nums(&[a, b])?;
                if v[1] <= 0.0 {
                    return Err(Error::Config(format!("normal needs a positive sd in `{s}`")));
                }
                Ok(FeatureDistribution::Normal { mean: v[0], sd: v[1] })
            }
            _ => Err(Error::Config(format!(
                "expected `uniform LOW HIGH` or `normal MEAN SD`, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverProfile {
    pub name: String,
    /// Allowed weekdays, Monday first.
    pub days: Vec<Weekday>,
    /// Allowed hours of the day.
    pub hours: Vec<u32>,
    pub weight: f64,
    /// One distribution per profile feature, in feature order.
    pub features: Vec<FeatureDistribution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub features: Vec<String>,
    pub start: NaiveDate,
    pub weeks: u32,
    pub label_column: String,
    pub timestamp_column: String,
    pub decimals: usize,
    pub drivers: Vec<DriverProfile>,
}

const WEEKDAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

fn weekday(token: &str) -> Result<usize> {
    let t = token.trim().to_ascii_lowercase();
    WEEKDAYS
        .iter()
        .position(|d| t.len() >= 3 && d.to_string().to_ascii_lowercase().starts_with(&t[..3]))
        .ok_or_else(|| Error::Config(format!("unknown day `{token}`")))
}

fn parse_days(value: &str) -> Result<Vec<Weekday>> {
    let mut on = [false; 7];
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part.eq_ignore_ascii_case("all") {
            on = [true; 7];
            continue;
        }
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (weekday(a)?, weekday(b)?);
                let mut d = a;
                loop {
                    on[d] = true;
                    if d == b {
                        break;
                    }
                    d = (d + 1) % 7;
                }
            }
            None => on[weekday(part)?] = true,
        }
    }
    let days: Vec<Weekday> = (0..7).filter(|&d| on[d]).map(|d| WEEKDAYS[d]).collect();
    if days.is_empty() {
        return Err(Error::Config("`days` selects no day".into()));
    }
    Ok(days)
}

fn parse_hours(value: &str) -> Result<Vec<u32>> {
    let hour = |t: &str| -> Result<u32> {
        t.trim()
            .parse::<u32>()
            .ok()
            .filter(|&h| h <= 24)
            .ok_or_else(|| Error::Config(format!("bad hour `{t}`")))
    };
    let mut on = [false; 24];
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (hour(a)? % 24, hour(b)? % 24);
                let mut h = a;
                loop {
                    on[h as usize] = true;
                    h = (h + 1) % 24;
                    if h == b {
                        break;
                    }
                }
            }
            None => on[(hour(part)? % 24) as usize] = true,
        }
    }
    let hours: Vec<u32> = (0..24).filter(|&h| on[h as usize]).collect();
    if hours.is_empty() {
        return Err(Error::Config("`hours` selects no hour".into()));
    }
    Ok(hours)
}

/// Driver name, header line number, key/value pairs.
type Section = (String, usize, Vec<(String, String)>);

impl FromStr for Profile {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut features: Option<Vec<String>> = None;
        let mut start = NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date");
        let mut weeks = 12u32;
        let mut label_column = "driver".to_string();
        let mut timestamp_column = "timestamp".to_string();
        let mut decimals = 3usize;
        let mut sections: Vec<Section> = Vec::new();

        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let at = |m: String| Error::Config(format!("profile line {}: {m}", n + 1));
            if line.is_empty() {
                continue;
            }
            if let Some(head) = line.strip_prefix('[') {
                let head = head
                    .strip_suffix(']')
                    .ok_or_else(|| at("unterminated section header".into()))?;
                let name = head
                    .trim()
                    .strip_prefix("driver")
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| at("expected `[driver NAME]`".into()))?;
                sections.push((name.to_string(), n + 1, Vec::new()));
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at("expected `key = value`".into()))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if let Some((_, _, pairs)) = sections.last_mut() {
                pairs.push((k, v));
                continue;
            }
            match k.as_str() {
                "features" => {
                    features = Some(v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                }
                "start" => {
                    start = NaiveDate::parse_from_str(&v, "%Y-%m-%d").map_err(|e| at(format!("start: {e}")))?
                }
                "weeks" => weeks = v.parse().ok().filter(|&w| w > 0).ok_or_else(|| at("weeks must be >= 1".into()))?,
                "label_column" => label_column = v,
                "timestamp_column" => timestamp_column = v,
                "decimals" => decimals = v.parse().ok().filter(|&d| d <= 12).ok_or_else(|| at("bad decimals".into()))?,
                other => return Err(at(format!("unknown setting `{other}`"))),
            }
        }

        let features = features
            .filter(|f| !f.is_empty())
            .ok_or_else(|| Error::Config("profile needs a `features` list".into()))?;
        let mut names: Vec<&str> = features.iter().map(String::as_str).collect();
        names.extend([label_column.as_str(), timestamp_column.as_str()]);
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::Config("feature and column names must be distinct".into()));
        }

        let mut drivers = Vec::new();
        for (name, line, pairs) in sections {
            let at = |m: String| Error::Config(format!("driver `{name}` (line {line}): {m}"));
            let mut days = WEEKDAYS.to_vec();
            let mut hours: Vec<u32> = (0..24).collect();
            let mut weight = 1.0;
            let mut dists: Vec<Option<FeatureDistribution>> = vec![None; features.len()];
            for (k, v) in pairs {
                match k.as_str() {
                    "days" => days = parse_days(&v).map_err(|e| at(e.to_string()))?,
                    "hours" => hours = parse_hours(&v).map_err(|e| at(e.to_string()))?,
                    "weight" => {
                        weight = v
                            .parse()
                            .ok()
                            .filter(|w: &f64| w.is_finite() && *w > 0.0)
                            .ok_or_else(|| at("weight must be positive".into()))?
                    }
                    feature => {
                        let i = features
                            .iter()
                            .position(|f| f == feature)
                            .ok_or_else(|| at(format!("`{feature}` is not a listed feature")))?;
                        dists[i] = Some(v.parse().map_err(|e: Error| at(e.to_string()))?);
                    }
                }
            }
            let features = dists
                .into_iter()
                .zip(&features)
                .map(|(d, f)| d.ok_or_else(|| at(format!("no distribution for `{f}`"))))
                .collect::<Result<_>>()?;
            if drivers.iter().any(|d: &DriverProfile| d.name == name) {
                return Err(at("driver defined twice".into()));
            }
            drivers.push(DriverProfile {
                name,
                days,
                hours,
                weight,
                features,
            });
        }
        if drivers.len() < 2 {
            return Err(Error::Config(format!(
                "profile needs at least 2 drivers, found {}",
                drivers.len()
            )));
        }
        Ok(Profile {
            features,
            start,
            weeks,
            label_column,
            timestamp_column,
            decimals,
            drivers,
        })
    }
}

impl Profile {
    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))?
            .parse()
    }

    /// Ingestion config matching the generated CSV.
    pub fn ingest_config(&self) -> IngestConfig {
        let mut cfg = IngestConfig::new(self.label_column.clone());
        cfg.timestamp_column = Some(self.timestamp_column.clone());
        cfg.timestamp_format = Some(TimestampFormat::Pattern(SYNTH_TIMESTAMP_FORMAT.into()));
        cfg
    }

    fn draw_time<R: Rng>(&self, driver: &DriverProfile, rng: &mut R) -> NaiveDateTime {
        let week = rng.random_range(0..self.weeks) as i64;
        let day = driver.days[rng.random_range(0..driver.days.len())];
        let hour = driver.hours[rng.random_range(0..driver.hours.len())];
        let offset = (day.num_days_from_monday() as i64 - self.start.weekday().num_days_from_monday() as i64)
            .rem_euclid(7);
        let date = self.start + Duration::days(week * 7 + offset);
        let time = NaiveTime::from_hms_opt(hour, rng.random_range(0..60), rng.random_range(0..60))
            .expect("valid time of day");
        date.and_time(time)
    }

    /// Writes `n` rows as CSV: the features, the timestamp, then the label.
    pub fn generate<W: Write>(&self, n: usize, seed: u64, out: W) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = WeightedIndex::new(self.drivers.iter().map(|d| d.weight))
            .map_err(|e| Error::Config(format!("driver weights: {e}")))?;
        let samplers: Vec<Vec<Sampler>> = self
            .drivers
            .iter()
            .map(|d| d.features.iter().map(|&f| Sampler::new(f)).collect())
            .collect();
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.features.clone();
        header.push(self.timestamp_column.clone());
        header.push(self.label_column.clone());
        w.write_record(&header)?;
        for _ in 0..n {
            let d = pick.sample(&mut rng);
            let driver = &self.drivers[d];
            let time = self.draw_time(driver, &mut rng);
            let mut record: Vec<String> = samplers[d]
                .iter()
                .map(|s| format!("{:.*}", self.decimals, s.sample(&mut rng)))
                .collect();
            record.push(time.format(SYNTH_TIMESTAMP_FORMAT).to_string());
            record.push(driver.name.clone());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<synthetic corpus>", e))?;
        Ok(())
    }

    pub fn generate_string(&self, n: usize, seed: u64) -> Result<String> {
        let mut buf = Vec::new();
        self.generate(n, seed, &mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Invariant(e.to_string()))
    }
}

enum Sampler {
    Uniform(Uniform<f64>),
    Normal(Normal<f64>),
}

impl Sampler {
    fn new(d: FeatureDistribution) -> Self {
        match d {
            FeatureDistribution::Uniform { low, high } => {
                Sampler::Uniform(Uniform::new(low, high).expect("checked when parsing"))
            }
            FeatureDistribution::Normal { mean, sd } => {
                Sampler::Normal(Normal::new(mean, sd).expect("checked when parsing"))
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Uniform(u) => u.sample(rng),
            Sampler::Normal(n) => n.sample(rng),
        }
    }
}
