//! Epoch-second time ranges and the default train/validation/backtest split.

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Default bar interval: 6 hours.
pub const DEFAULT_BAR_INTERVAL: i64 = 21_600;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimeError {
    #[error("cannot parse date `{0}` (expected YYYY-MM-DD)")]
    BadDate(String),
    #[error("empty range: start {start} is after end {end}")]
    Empty { start: i64, end: i64 },
}

/// Closed interval `[start, end]` of epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: i64,
    pub end: i64,
}

impl TimeRange {
    pub fn new(start: i64, end: i64) -> Result<Self, TimeError> {
        if start > end {
            return Err(TimeError::Empty { start, end });
        }
        Ok(Self { start, end })
    }

    /// Whole UTC days from `from` through `to`, both inclusive.
    pub fn from_dates(from: &str, to: &str) -> Result<Self, TimeError> {
        let start = parse_date(from)?;
        let end = parse_date(to)? + SECONDS_PER_DAY - 1;
        Self::new(start, end)
    }

    pub fn contains(&self, ts: i64) -> bool {
        ts >= self.start && ts <= self.end
    }

    pub fn duration(&self) -> i64 {
        self.end - self.start
    }
}

/// Midnight UTC of a `YYYY-MM-DD` date, in epoch seconds.
pub fn parse_date(s: &str) -> Result<i64, TimeError> {
    let date = NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| TimeError::BadDate(s.to_string()))?;
    Ok(date.and_time(NaiveTime::MIN).and_utc().timestamp())
}

pub fn format_ts(ts: i64) -> String {
    chrono::DateTime::from_timestamp(ts, 0)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// UTC calendar day index of a timestamp.
pub fn utc_day(ts: i64) -> i64 {
    ts.div_euclid(SECONDS_PER_DAY)
}

/// Training, validation and backtesting ranges for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: TimeRange,
    pub validation: TimeRange,
    pub backtest: TimeRange,
}

impl DataSplit {
    /// Oct 2020 – Dec 2021 training, Jan – Feb 2022 validation,
    /// Mar – Sep 2022 backtesting.
    pub fn reference() -> Self {
        Self {
            train: TimeRange::from_dates("2020-10-01", "2021-12-31").expect("valid preset"),
            validation: TimeRange::from_dates("2022-01-01", "2022-02-28").expect("valid preset"),
            backtest: TimeRange::from_dates("2022-03-01", "2022-09-30").expect("valid preset"),
        }
    }
}
