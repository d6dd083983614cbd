//! Ingestion, persistence and time alignment of OHLCV bars and on-chain
//! metric series.
//!
//! Storage is a directory with one sub-directory per asset (`BTC-USDT/`)
//! holding `ohlcv.csv` and `metrics.csv`, plus a `manifest.csv` index at the
//! root.

mod align;
mod parse;
mod source;
mod store;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use align::{align_series, AlignReport, DroppedMetric, DropReason, DEFAULT_FILL_LIMIT};
pub use parse::{parse_metrics, parse_ohlcv, ParsedMetrics};
pub use source::{DataSource, ExchangeApiSource, OnChainApiSource};
pub use store::{FileStore, MetricIngest, MetricSeries};

use crate::time::TimeRange;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid asset id `{0}`: symbol must be non-empty alphanumeric, quote non-empty")]
    InvalidAsset(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} rejected row(s): {}", .0.len(), fmt_issues(.0))]
    RejectedRows(Vec<RowIssue>),
    #[error("corrupt store file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("no data stored for {0}")]
    UnknownAsset(AssetId),
    #[error("OHLCV gap for {asset}: no bar at ts {ts}")]
    OhlcvGap { asset: AssetId, ts: i64 },
    #[error("empty range for {asset}: no bar timestamps inside [{start}, {end}]")]
    EmptyRange { asset: AssetId, start: i64, end: i64 },
    #[error("no metrics left for {asset} after alignment ({dropped} dropped)")]
    EmptyMetricPool { asset: AssetId, dropped: usize },
    #[error("{0} data source is not implemented in this build")]
    Unsupported(&'static str),
}

fn fmt_issues(issues: &[RowIssue]) -> String {
    let shown: Vec<String> = issues.iter().take(5).map(|i| i.to_string()).collect();
    let mut s = shown.join("; ");
    if issues.len() > 5 {
        s.push_str(&format!("; ... {} more", issues.len() - 5));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    Malformed,
    Invariant,
    DuplicateTs,
    Conflict,
    NonFinite,
}

/// A problem with one input record. `row` is the 1-based record number,
/// not counting the header (0 refers to the header itself).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    pub row: usize,
    pub kind: IssueKind,
    pub message: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

/// Ticker symbol plus quote currency, e.g. `BTC/USDT`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AssetId {
    symbol: String,
    quote: String,
}

impl AssetId {
    pub const DEFAULT_QUOTE: &'static str = "USDT";

    pub fn new(symbol: &str) -> Result<Self, StoreError> {
        Self::with_quote(symbol, Self::DEFAULT_QUOTE)
    }

    pub fn with_quote(symbol: &str, quote: &str) -> Result<Self, StoreError> {
        let symbol = symbol.trim().to_ascii_uppercase();
        let quote = quote.trim().to_ascii_uppercase();
        if symbol.is_empty()
            || !symbol.chars().all(|c| c.is_ascii_alphanumeric())
            || quote.is_empty()
            || !quote.chars().all(|c| c.is_ascii_alphanumeric())
        {
            return Err(StoreError::InvalidAsset(format!("{symbol}/{quote}")));
        }
        Ok(Self { symbol, quote })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn quote(&self) -> &str {
        &self.quote
    }

    /// Directory-safe key, `BTC-USDT`.
    pub fn key(&self) -> String {
        format!("{}-{}", self.symbol, self.quote)
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.symbol, self.quote)
    }
}

impl FromStr for AssetId {
    type Err = StoreError;

    /// Accepts `BTC`, `BTC/USDT` or `BTC-USDT`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(['/', '-']) {
            Some((sym, quote)) => Self::with_quote(sym, quote),
            None => Self::new(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub ts: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    pub fn check(&self) -> Result<(), String> {
        let fields = [self.open, self.high, self.low, self.close, self.volume];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err("non-finite field".into());
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "high {} below max(open {}, close {})",
                self.high, self.open, self.close
            ));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!(
                "low {} above min(open {}, close {})",
                self.low, self.open, self.close
            ));
        }
        if self.low <= 0.0 {
            return Err(format!("low {} is not positive", self.low));
        }
        if self.volume < 0.0 {
            return Err(format!("negative volume {}", self.volume));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricPoint {
    pub ts: i64,
    pub name: String,
    pub value: f64,
}

/// Column order of [`AlignedFrame::ohlcv`].
pub const OHLCV_COLUMNS: [&str; 5] = ["open", "high", "low", "close", "volume"];
pub const CLOSE: usize = 3;

/// Bars and metrics for one asset on a common equispaced timestamp grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFrame {
    pub asset: AssetId,
    pub interval: i64,
    pub timestamps: Vec<i64>,
    /// T x 5, columns as in [`OHLCV_COLUMNS`].
    pub ohlcv: DMatrix<f64>,
    /// T x K.
    pub metrics: DMatrix<f64>,
    pub metric_names: Vec<String>,
}

impl AlignedFrame {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.ohlcv.column(CLOSE).iter().copied().collect()
    }

    pub fn close(&self, row: usize) -> f64 {
        self.ohlcv[(row, CLOSE)]
    }

    pub fn metric_index(&self, name: &str) -> Option<usize> {
        self.metric_names.iter().position(|n| n == name)
    }

    /// Row index of an exact timestamp.
    pub fn index_of(&self, ts: i64) -> Option<usize> {
        self.timestamps.binary_search(&ts).ok()
    }

    /// Number of rows with timestamp `<= ts`.
    pub fn rows_through(&self, ts: i64) -> usize {
        self.timestamps.partition_point(|&t| t <= ts)
    }

    /// Range spanned by the frame's timestamps.
    pub fn range(&self) -> Option<TimeRange> {
        Some(TimeRange {
            start: *self.timestamps.first()?,
            end: *self.timestamps.last()?,
        })
    }

    /// Leading rows with timestamp `<= ts`.
    pub fn truncated(&self, ts: i64) -> AlignedFrame {
        let rows = self.rows_through(ts);
        AlignedFrame {
            asset: self.asset.clone(),
            interval: self.interval,
            timestamps: self.timestamps[..rows].to_vec(),
            ohlcv: self.ohlcv.rows(0, rows).into_owned(),
            metrics: self.metrics.rows(0, rows).into_owned(),
            metric_names: self.metric_names.clone(),
        }
    }
}
