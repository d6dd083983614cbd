use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{HorizonConfig, Pairing, RefineryError};
use crate::data_store::AlignedFrame;

/// `out[i] = close[i + k] / close[i] - 1`.
pub fn k_period_returns(close: &[f64], k: usize) -> Result<Vec<f64>, RefineryError> {
    if k == 0 || k >= close.len() {
        return Err(RefineryError::TooShort { needed: k + 1, got: close.len() });
    }
    if let Some(p) = close.iter().find(|p| !(**p > 0.0)) {
        return Err(RefineryError::NonPositivePrice(*p));
    }
    Ok(close.windows(k + 1).map(|w| w[k] / w[0] - 1.0).collect())
}

/// Sample Pearson correlation. `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, RefineryError> {
    if x.len() != y.len() {
        return Err(RefineryError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(RefineryError::TooShort { needed: 3, got: x.len() });
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return Ok(None);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub metric: String,
    pub horizon: usize,
    pub r: Option<f64>,
    /// 1-based position when the horizon's defined coefficients are sorted
    /// by descending r (ties by name); `None` when r is undefined.
    pub rank: Option<usize>,
}

/// Pearson coefficients per (metric, horizon).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub entries: Vec<CorrelationEntry>,
}

impl CorrelationTable {
    pub fn get(&self, metric: &str, horizon: usize) -> Option<&CorrelationEntry> {
        self.entries.iter().find(|e| e.metric == metric && e.horizon == horizon)
    }

    /// `metric,horizon,r,rank`; undefined coefficients leave r and rank empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "metric,horizon,r,rank")?;
        for e in &self.entries {
            let r = e.r.map(|v| v.to_string()).unwrap_or_default();
            let rank = e.rank.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", e.metric, e.horizon, r, rank)?;
        }
        Ok(())
    }

    fn ordered(&self, horizon: usize) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self
            .entries
            .iter()
            .filter(|e| e.horizon == horizon)
            .filter_map(|e| e.r.map(|r| (e.metric.as_str(), r)))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }
}

/// Correlates every metric with the k-bar returns of each horizon.
pub fn correlation_table(frame: &AlignedFrame, cfg: &HorizonConfig) -> Result<CorrelationTable, RefineryError> {
    cfg.validate()?;
    let t_len = frame.len();
    let longest = *cfg.horizons.iter().max().expect("three horizons");
    if t_len < longest + 3 {
        return Err(RefineryError::TooShort { needed: longest + 3, got: t_len });
    }
    if frame.metric_names.is_empty() {
        return Err(RefineryError::NoMetrics);
    }
    let close = frame.closes();
    let mut table = CorrelationTable::default();
    for &k in &cfg.horizons {
        let returns = k_period_returns(&close, k)?;
        let mut rows = Vec::with_capacity(frame.metric_names.len());
        for (j, name) in frame.metric_names.iter().enumerate() {
            let col = frame.metrics.column(j);
            let x: Vec<f64> = match cfg.pairing {
                // metric at t against the return over (t, t + k]
                Pairing::Forward => col.iter().take(t_len - k).copied().collect(),
                // metric at t against the return over (t - k, t]
                Pairing::Contemporaneous => col.iter().skip(k).copied().collect(),
            };
            rows.push(CorrelationEntry { metric: name.clone(), horizon: k, r: pearson(&x, &returns)?, rank: None });
        }
        let mut defined: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].r.is_some()).collect();
        defined.sort_by(|&a, &b| {
            rows[b].r.unwrap().total_cmp(&rows[a].r.unwrap()).then_with(|| rows[a].metric.cmp(&rows[b].metric))
        });
        for (pos, &i) in defined.iter().enumerate() {
            rows[i].rank = Some(pos + 1);
        }
        table.entries.extend(rows);
    }
    Ok(table)
}

/// Where a selected metric came from at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub horizon: usize,
    /// 1-based position in the horizon's descending-r ordering.
    pub rank: usize,
    /// Sign of r: 1, -1, or 0.
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedMetric {
    pub name: String,
    /// Number of horizon groups (1..=3) containing the metric.
    pub frequency: usize,
    /// Largest |r| over the horizons whose group contains the metric.
    pub max_abs_r: f64,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedMetricSet {
    pub metrics: Vec<SelectedMetric>,
    /// Fewer than `final_count` candidates were available.
    pub shortfall: bool,
}

impl SelectedMetricSet {
    pub fn names(&self) -> Vec<String> {
        self.metrics.iter().map(|m| m.name.clone()).collect()
    }

    /// `name,frequency,max_abs_r,provenance` with provenance as
    /// `horizon:rank:sign` items joined by `;`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "name,frequency,max_abs_r,provenance")?;
        for m in &self.metrics {
            let prov: Vec<String> =
                m.provenance.iter().map(|p| format!("{}:{}:{:+}", p.horizon, p.rank, p.sign)).collect();
            writeln!(w, "{},{},{},{}", m.name, m.frequency, m.max_abs_r, prov.join(";"))?;
        }
        Ok(())
    }
}

/// Ranks metrics from a correlation table.
///
/// For each horizon the defined coefficients are sorted by descending r
/// (ties by name); the first and last `top_per_group` form that horizon's
/// group. Candidates from all groups are ordered by group frequency
/// (descending), then by their largest |r| among those groups (descending),
/// then by name, and the first `final_count` are kept.
pub fn rank_metrics(table: &CorrelationTable, cfg: &HorizonConfig) -> Result<SelectedMetricSet, RefineryError> {
    if table.entries.iter().all(|e| e.r.is_none()) {
        return Err(RefineryError::Degenerate);
    }
    let mut candidates: BTreeMap<&str, (usize, f64, Vec<Provenance>)> = BTreeMap::new();
    for &h in &cfg.horizons {
        let ordered = table.ordered(h);
        let n = ordered.len();
        let keep = cfg.top_per_group.min(n);
        for (pos, (name, r)) in ordered.iter().enumerate() {
            if pos < keep || pos >= n - keep {
                let entry = candidates.entry(name).or_insert((0, 0.0, Vec::new()));
                entry.0 += 1;
                entry.1 = entry.1.max(r.abs());
                let sign = if *r > 0.0 { 1 } else if *r < 0.0 { -1 } else { 0 };
                entry.2.push(Provenance { horizon: h, rank: pos + 1, sign });
            }
        }
    }
    let mut ranked: Vec<SelectedMetric> = candidates
        .into_iter()
        .map(|(name, (frequency, max_abs_r, provenance))| SelectedMetric {
            name: name.to_string(),
            frequency,
            max_abs_r,
            provenance,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then_with(|| b.max_abs_r.total_cmp(&a.max_abs_r))
            .then_with(|| a.name.cmp(&b.name))
    });
    let shortfall = ranked.len() < cfg.final_count;
    ranked.truncate(cfg.final_count);
    Ok(SelectedMetricSet { metrics: ranked, shortfall })
}

/// Correlation-based selection of valid metrics over the whole frame.
pub fn select_valid_metrics(frame: &AlignedFrame, cfg: &HorizonConfig) -> Result<SelectedMetricSet, RefineryError> {
    let table = correlation_table(frame, cfg)?;
    rank_metrics(&table, cfg)
}
