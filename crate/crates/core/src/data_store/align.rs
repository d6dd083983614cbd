use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{AlignedFrame, AssetId, Bar, StoreError};
use crate::time::TimeRange;

pub const DEFAULT_FILL_LIMIT: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    /// No observation at or before the first bar.
    NoHistory,
    /// Some bar was more than `fill_limit` intervals past the latest observation.
    GapExceedsFillLimit { at_ts: i64, stale_bars: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedMetric {
    pub name: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignReport {
    pub dropped: Vec<DroppedMetric>,
    /// Rows filled by carrying a previous observation forward, per kept metric.
    pub filled: BTreeMap<String, usize>,
}

/// Joins bars and metric series on the bar grid `range.start + i * interval`.
///
/// A metric value at bar `t` is the last observation with timestamp `<= t`.
/// Its staleness is the number of whole intervals between that observation
/// and `t`; a metric whose staleness ever exceeds `fill_limit` is dropped.
pub fn align_series(
    asset: &AssetId,
    bars: &[Bar],
    metrics: &BTreeMap<String, Vec<(i64, f64)>>,
    range: TimeRange,
    interval: i64,
    fill_limit: usize,
) -> Result<(AlignedFrame, AlignReport), StoreError> {
    assert!(interval > 0, "bar interval must be positive");
    let by_ts: BTreeMap<i64, &Bar> = bars.iter().map(|b| (b.ts, b)).collect();

    let mut grid = Vec::new();
    let mut ts = range.start;
    while ts <= range.end {
        let bar = by_ts.get(&ts).ok_or(StoreError::OhlcvGap { asset: asset.clone(), ts })?;
        grid.push(*bar);
        ts += interval;
    }
    if grid.is_empty() {
        return Err(StoreError::EmptyRange { asset: asset.clone(), start: range.start, end: range.end });
    }
    let t_len = grid.len();

    let mut report = AlignReport::default();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    'metric: for (name, series) in metrics {
        // series is sorted by ts
        let mut col = Vec::with_capacity(t_len);
        let mut cursor = 0usize;
        let mut last: Option<(i64, f64)> = None;
        let mut fills = 0;
        for bar in &grid {
            while cursor < series.len() && series[cursor].0 <= bar.ts {
                last = Some(series[cursor]);
                cursor += 1;
            }
            let Some((obs_ts, value)) = last else {
                report.dropped.push(DroppedMetric { name: name.clone(), reason: DropReason::NoHistory });
                continue 'metric;
            };
            let stale = ((bar.ts - obs_ts) / interval) as usize;
            if stale > fill_limit {
                report.dropped.push(DroppedMetric {
                    name: name.clone(),
                    reason: DropReason::GapExceedsFillLimit { at_ts: bar.ts, stale_bars: stale },
                });
                continue 'metric;
            }
            if stale > 0 {
                fills += 1;
            }
            col.push(value);
        }
        report.filled.insert(name.clone(), fills);
        columns.push((name.clone(), col));
    }

    if columns.is_empty() {
        return Err(StoreError::EmptyMetricPool { asset: asset.clone(), dropped: report.dropped.len() });
    }
    for d in &report.dropped {
        log::warn!("{asset}: dropped metric `{}` ({:?})", d.name, d.reason);
    }

    let ohlcv = DMatrix::from_fn(t_len, 5, |r, c| {
        let b = grid[r];
        [b.open, b.high, b.low, b.close, b.volume][c]
    });
    let metrics = DMatrix::from_fn(t_len, columns.len(), |r, c| columns[c].1[r]);
    let frame = AlignedFrame {
        asset: asset.clone(),
        interval,
        timestamps: grid.iter().map(|b| b.ts).collect(),
        ohlcv,
        metrics,
        metric_names: columns.into_iter().map(|(n, _)| n).collect(),
    };
    Ok((frame, report))
}
