//! Performance statistics (ARR, DRR, Sortino) and comparison tables.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{utc_day, SECONDS_PER_DAY};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("value {0} is not positive")]
    NonPositive(f64),
    #[error("return {0} is not above -1")]
    BadReturn(f64),
    #[error("timestamps and values differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("timestamp spacing {found}s does not match {periods_per_day} periods per day")]
    Spacing { found: i64, periods_per_day: u32 },
    #[error("curves do not share a range: {0}")]
    RangeMismatch(String),
    #[error("malformed curve file: {0}")]
    Parse(String),
}

/// Accumulated rate of return `V_end / V_start - 1`.
pub fn arr(values: &[f64]) -> Result<f64, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooShort { needed: 2, got: values.len() });
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(MetricsError::NonPositive(*v));
    }
    Ok(values[values.len() - 1] / values[0] - 1.0)
}

/// Simple per-period returns; `returns[i]` covers the period starting at
/// `timestamps[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    timestamps: Vec<i64>,
    returns: Vec<f64>,
    periods_per_day: u32,
}

impl ReturnSeries {
    pub fn new(timestamps: Vec<i64>, returns: Vec<f64>, periods_per_day: u32) -> Result<Self, MetricsError> {
        if timestamps.len() != returns.len() {
            return Err(MetricsError::LengthMismatch(timestamps.len(), returns.len()));
        }
        if returns.is_empty() {
            return Err(MetricsError::TooShort { needed: 1, got: 0 });
        }
        if let Some(r) = returns.iter().find(|r| !(**r > -1.0) || !r.is_finite()) {
            return Err(MetricsError::BadReturn(*r));
        }
        if periods_per_day == 0 {
            return Err(MetricsError::Spacing { found: 0, periods_per_day });
        }
        let step = SECONDS_PER_DAY / i64::from(periods_per_day);
        if let Some(w) = timestamps.windows(2).find(|w| w[1] - w[0] != step) {
            return Err(MetricsError::Spacing { found: w[1] - w[0], periods_per_day });
        }
        Ok(Self { timestamps, returns, periods_per_day })
    }

    /// Returns of a value curve sampled every `interval` seconds, which must
    /// divide a day.
    pub fn from_curve(timestamps: &[i64], values: &[f64], interval: i64) -> Result<Self, MetricsError> {
        if timestamps.len() != values.len() {
            return Err(MetricsError::LengthMismatch(timestamps.len(), values.len()));
        }
        arr(values)?;
        if interval <= 0 || SECONDS_PER_DAY % interval != 0 {
            return Err(MetricsError::Spacing { found: interval, periods_per_day: 0 });
        }
        let returns = values.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
        Self::new(timestamps[..timestamps.len() - 1].to_vec(), returns, (SECONDS_PER_DAY / interval) as u32)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn periods_per_day(&self) -> u32 {
        self.periods_per_day
    }

    /// Per-UTC-day compounded returns, keyed by day number. A period belongs
    /// to the day in which it starts.
    pub fn daily_returns(&self) -> Vec<(i64, f64)> {
        let mut days: BTreeMap<i64, Option<f64>> = BTreeMap::new();
        for (ts, r) in self.timestamps.iter().zip(&self.returns) {
            // (1 + a)(1 + b) - 1 = a + b + ab, exact for single-period days
            let day = days.entry(utc_day(*ts)).or_insert(None);
            *day = Some(match *day {
                None => *r,
                Some(a) => a + r + a * r,
            });
        }
        days.into_iter().map(|(d, r)| (d, r.expect("non-empty day"))).collect()
    }
}

/// Mean daily return.
pub fn drr(series: &ReturnSeries) -> f64 {
    let daily = series.daily_returns();
    daily.iter().map(|(_, r)| r).sum::<f64>() / daily.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sortino {
    Finite(f64),
    /// No downside and a mean above target.
    Unbounded,
}

impl Sortino {
    pub fn value(self) -> f64 {
        match self {
            Self::Finite(v) => v,
            Self::Unbounded => f64::INFINITY,
        }
    }
}

impl fmt::Display for Sortino {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(v) => write!(f, "{v:.4}"),
            Self::Unbounded => f.write_str("inf"),
        }
    }
}

impl Serialize for Sortino {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Finite(v) => s.serialize_f64(*v),
            Self::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Sortino {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Self::Finite(v)),
            Raw::Text(t) if t == "inf" => Ok(Self::Unbounded),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad sortino value `{t}`"))),
        }
    }
}

/// Sortino ratio of a set of returns against `target`:
/// `(mean - target) / sqrt(mean(min(r - target, 0)^2))`.
pub fn sortino_of(returns: &[f64], target: f64) -> Sortino {
    let n = returns.len() as f64;
    let excess = returns.iter().sum::<f64>() / n - target;
    let downside = (returns.iter().map(|r| (r - target).min(0.0).powi(2)).sum::<f64>() / n).sqrt();
    if downside == 0.0 {
        if excess > 0.0 {
            Sortino::Unbounded
        } else {
            Sortino::Finite(0.0)
        }
    } else {
        Sortino::Finite(excess / downside)
    }
}

/// Sortino ratio on daily returns, without annualization.
pub fn sortino(series: &ReturnSeries, target: f64) -> Sortino {
    let daily: Vec<f64> = series.daily_returns().into_iter().map(|(_, r)| r).collect();
    sortino_of(&daily, target)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub arr: f64,
    pub drr: f64,
    pub sortino: Sortino,
}

/// Statistics of a value curve sampled every `interval` seconds.
pub fn summarize(timestamps: &[i64], values: &[f64], interval: i64) -> Result<SummaryStats, MetricsError> {
    let series = ReturnSeries::from_curve(timestamps, values, interval)?;
    Ok(SummaryStats { arr: arr(values)?, drr: drr(&series), sortino: sortino(&series, 0.0) })
}

/// Named columns of statistics, strategy first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub columns: Vec<(String, SummaryStats)>,
}

impl Comparison {
    fn cells(&self) -> Vec<(&'static str, Vec<String>)> {
        vec![
            ("ARR (%)", self.columns.iter().map(|(_, s)| format!("{:.2}", s.arr * 100.0)).collect()),
            ("DRR (%)", self.columns.iter().map(|(_, s)| format!("{:.4}", s.drr * 100.0)).collect()),
            ("SR", self.columns.iter().map(|(_, s)| s.sortino.to_string()).collect()),
        ]
    }

    pub fn to_text(&self) -> String {
        let header: Vec<&str> = std::iter::once("metric").chain(self.columns.iter().map(|(n, _)| n.as_str())).collect();
        let rows = self.cells();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for (label, cells) in &rows {
            widths[0] = widths[0].max(label.len());
            for (i, c) in cells.iter().enumerate() {
                widths[i + 1] = widths[i + 1].max(c.len());
            }
        }
        let mut out = String::new();
        let line = |cols: Vec<&str>, out: &mut String| {
            let parts: Vec<String> = cols
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(header.clone(), &mut out);
        for (label, cells) in &rows {
            line(std::iter::once(*label).chain(cells.iter().map(String::as_str)).collect(), &mut out);
        }
        out.push_str("SR: daily returns, target 0, not annualized\n");
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for (n, _) in &self.columns {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (label, cells) in self.cells() {
            out.push_str(label);
            for c in cells {
                out.push(',');
                out.push_str(&c);
            }
            out.push('\n');
        }
        out
    }
}

/// Value curves sharing one timestamp axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub timestamps: Vec<i64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Curves {
    pub fn new(timestamps: Vec<i64>, columns: Vec<(String, Vec<f64>)>) -> Result<Self, MetricsError> {
        for (name, v) in &columns {
            if v.len() != timestamps.len() {
                return Err(MetricsError::RangeMismatch(format!(
                    "`{name}` has {} points, axis has {}",
                    v.len(),
                    timestamps.len()
                )));
            }
        }
        Ok(Self { timestamps, columns })
    }

    /// `ts,<name>_value,...`; values use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "ts")?;
        for (name, _) in &self.columns {
            write!(w, ",{name}_value")?;
        }
        writeln!(w)?;
        for (i, ts) in self.timestamps.iter().enumerate() {
            write!(w, "{ts}")?;
            for (_, v) in &self.columns {
                write!(w, ",{}", v[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self, MetricsError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
        let header = rdr.headers().map_err(|e| MetricsError::Parse(e.to_string()))?.clone();
        if header.get(0) != Some("ts") {
            return Err(MetricsError::Parse("first column must be `ts`".into()));
        }
        let names = header
            .iter()
            .skip(1)
            .map(|h| {
                h.strip_suffix("_value")
                    .map(str::to_string)
                    .ok_or_else(|| MetricsError::Parse(format!("column `{h}` lacks the _value suffix")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut timestamps = Vec::new();
        let mut cols = vec![Vec::new(); names.len()];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| MetricsError::Parse(e.to_string()))?;
            let bad = |f: &str| MetricsError::Parse(format!("bad number `{f}`"));
            let ts = rec.get(0).unwrap_or("");
            timestamps.push(ts.parse().map_err(|_| bad(ts))?);
            for (j, col) in cols.iter_mut().enumerate() {
                let f = rec.get(j + 1).unwrap_or("");
                col.push(f.parse().map_err(|_| bad(f))?);
            }
        }
        Self::new(timestamps, names.into_iter().zip(cols).collect())
    }
}
