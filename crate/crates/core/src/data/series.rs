use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling frequency of a series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Freq {
    Hourly,
    Daily,
}

impl Freq {
    pub fn step(self) -> Duration {
        match self {
            Freq::Hourly => Duration::hours(1),
            Freq::Daily => Duration::days(1),
        }
    }

    /// Default seasonal period used by MASE and MSIS.
    pub fn seasonality(self) -> usize {
        match self {
            Freq::Hourly => 24,
            Freq::Daily => 1,
        }
    }

    /// Default number of rolling evaluation windows.
    pub fn default_windows(self) -> usize {
        match self {
            Freq::Hourly => 7,
            Freq::Daily => 5,
        }
    }

    pub fn timestamp(self, start: NaiveDateTime, index: usize) -> NaiveDateTime {
        start + self.step() * index as i32
    }

    /// Calendar features in `[0, 1]` for the timestamp `index` steps after
    /// `start`: hourly gives (hour of day, day of week), daily gives
    /// (day of week, day of month).
    pub fn calendar_features(self, start: NaiveDateTime, index: usize) -> [f64; 2] {
        let ts = self.timestamp(start, index);
        let dow = ts.weekday().num_days_from_monday() as f64 / 6.0;
        match self {
            Freq::Hourly => [ts.hour() as f64 / 23.0, dow],
            Freq::Daily => [dow, ts.day0() as f64 / 30.0],
        }
    }
}

impl FromStr for Freq {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "h" | "1h" | "hour" | "hourly" => Ok(Freq::Hourly),
            "d" | "1d" | "day" | "daily" => Ok(Freq::Daily),
            other => Err(Error::Data(format!("unsupported frequency `{other}`"))),
        }
    }
}

impl fmt::Display for Freq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Freq::Hourly => "hourly",
            Freq::Daily => "daily",
        })
    }
}

/// Value domain of a dataset; selects output activation and input scaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// ℝ
    Real,
    /// ℝ⁺ (non-negative reals)
    Positive,
    /// (0, 1)
    UnitInterval,
    /// ℕ
    Count,
}

impl Domain {
    pub fn contains(self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        match self {
            Domain::Real => true,
            Domain::Positive => v >= 0.0,
            Domain::UnitInterval => (0.0..=1.0).contains(&v),
            Domain::Count => v >= 0.0 && v.fract() == 0.0,
        }
    }

    /// Whether inputs are divided by the mean-absolute context scale.
    pub fn uses_mean_scaling(self) -> bool {
        matches!(self, Domain::Positive | Domain::Count)
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" | "r" => Ok(Domain::Real),
            "positive" | "r+" => Ok(Domain::Positive),
            "unit_interval" | "unit" | "(0,1)" => Ok(Domain::UnitInterval),
            "count" | "n" => Ok(Domain::Count),
            other => Err(Error::Data(format!("unknown domain `{other}`"))),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Real => "real",
            Domain::Positive => "positive",
            Domain::UnitInterval => "unit_interval",
            Domain::Count => "count",
        })
    }
}

/// Parses `YYYY-MM-DD`, `YYYY-MM-DD HH:MM` or `YYYY-MM-DD HH:MM:SS`
/// (a `T` separator is also accepted).
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    for fmt in [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
    ] {
        if let Ok(ts) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(ts);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight exists"))
        .map_err(|_| Error::Data(format!("unparsable timestamp `{s}`")))
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format("%Y-%m-%d %H:%M:%S").to_string()
}

/// A univariate target sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    pub start: NaiveDateTime,
    pub freq: Freq,
    pub domain: Domain,
    values: Vec<f64>,
}

impl TimeSeries {
    /// Validates non-emptiness and that every value lies in `domain`.
    pub fn new(
        id: impl Into<String>,
        start: NaiveDateTime,
        freq: Freq,
        domain: Domain,
        values: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::Data(format!("series `{id}` is empty")));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !domain.contains(**v)) {
            let what = if v.is_nan() { "missing value" } else { "value" };
            return Err(Error::Domain(format!(
                "series `{id}` index {i}: {what} {v} outside {domain} domain"
            )));
        }
        Ok(Self {
            id,
            start,
            freq,
            domain,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The first `len` observations as a new series.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        Self::new(
            self.id.clone(),
            self.start,
            self.freq,
            self.domain,
            self.values[..len.min(self.values.len())].to_vec(),
        )
    }
}

/// A collection of series sharing frequency and domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub freq: Freq,
    pub domain: Domain,
    pub prediction_length: usize,
    series: Vec<TimeSeries>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        freq: Freq,
        domain: Domain,
        prediction_length: usize,
        series: Vec<TimeSeries>,
    ) -> Result<Self> {
        let name = name.into();
        if prediction_length == 0 {
            return Err(Error::Config("prediction_length must be positive".into()));
        }
        if let Some(s) = series.iter().find(|s| s.freq != freq) {
            return Err(Error::Data(format!(
                "mixed frequencies: series `{}` is {}, dataset is {freq}",
                s.id, s.freq
            )));
        }
        if let Some(s) = series.iter().find(|s| s.domain != domain) {
            return Err(Error::Data(format!(
                "mixed domains: series `{}` is {}, dataset is {domain}",
                s.id, s.domain
            )));
        }
        Ok(Self {
            name,
            freq,
            domain,
            prediction_length,
            series,
        })
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn total_observations(&self) -> usize {
        self.series.iter().map(TimeSeries::len).sum()
    }

    /// A dataset over the first `n` series.
    pub fn head(&self, n: usize) -> Self {
        Self {
            series: self.series.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }
}
