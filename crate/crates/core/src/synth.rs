//! Seeded synthetic markets for demos and tests.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data_store::{align_series, AlignedFrame, AssetId, Bar, MetricSeries, StoreError};
use crate::time::TimeRange;

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub asset: AssetId,
    pub start: i64,
    pub interval: i64,
    pub bars: usize,
    pub seed: u64,
    /// Per-bar log drift.
    pub drift: f64,
    /// Per-bar log-return standard deviation.
    pub volatility: f64,
    /// Metrics that are noisy copies of the forward `lead`-bar return.
    pub planted: usize,
    pub noise_metrics: usize,
    pub lead: usize,
    /// Signal-to-noise variance ratio of the planted metrics.
    pub snr: f64,
}

impl MarketSpec {
    pub fn new(asset: AssetId, start: i64, interval: i64, bars: usize, seed: u64) -> Self {
        Self {
            asset,
            start,
            interval,
            bars,
            seed,
            drift: 0.0,
            volatility: 0.02,
            planted: 3,
            noise_metrics: 5,
            lead: 24,
            snr: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub asset: AssetId,
    pub interval: i64,
    pub bars: Vec<Bar>,
    pub metrics: MetricSeries,
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

fn bars_from_closes(start: i64, interval: i64, first_open: f64, closes: &[f64], rng: &mut ChaCha8Rng) -> Vec<Bar> {
    let mut open = first_open;
    closes
        .iter()
        .enumerate()
        .map(|(i, &close)| {
            let wick: f64 = rng.random::<f64>() * 0.004;
            let bar = Bar {
                ts: start + i as i64 * interval,
                open,
                high: open.max(close) * (1.0 + wick),
                low: open.min(close) * (1.0 - wick),
                close,
                volume: 1_000.0 * (0.5 + rng.random::<f64>()),
            };
            open = close;
            bar
        })
        .collect()
}

/// Geometric random walk with planted forward-return metrics and pure-noise
/// metrics. Planted metric names are `signal_NN`, the rest `noise_NN`.
pub fn generate(spec: &MarketSpec) -> SyntheticMarket {
    assert!(spec.bars > spec.lead && spec.lead > 0, "need more bars than the lead");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shock = Normal::new(spec.drift, spec.volatility).expect("finite volatility");
    let mut closes = Vec::with_capacity(spec.bars);
    let mut p = 100.0;
    let first_open = p;
    for _ in 0..spec.bars {
        p *= f64::exp(shock.sample(&mut rng));
        closes.push(p);
    }
    let bars = bars_from_closes(spec.start, spec.interval, first_open, &closes, &mut rng);

    // forward return, truncated at the end of the series
    let fwd: Vec<f64> =
        (0..spec.bars).map(|t| closes[(t + spec.lead).min(spec.bars - 1)] / closes[t] - 1.0).collect();
    let noise_sd = std_dev(&fwd) / spec.snr.sqrt();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut metrics = BTreeMap::new();
    for j in 0..spec.planted {
        let series = bars
            .iter()
            .zip(&fwd)
            .map(|(b, f)| (b.ts, f + noise_sd * unit.sample(&mut rng)))
            .collect();
        metrics.insert(format!("signal_{j:02}"), series);
    }
    for j in 0..spec.noise_metrics {
        let series = bars.iter().map(|b| (b.ts, unit.sample(&mut rng))).collect();
        metrics.insert(format!("noise_{j:02}"), series);
    }
    SyntheticMarket { asset: spec.asset.clone(), interval: spec.interval, bars, metrics }
}

/// Prices alternate x1.05 / x0.95 (times a small multiplicative jitter) on
/// even / odd bars. Metric `leak` is the sign of the next bar's move and
/// `leak_echo` a lightly noised copy of it.
pub fn alternating(asset: AssetId, start: i64, interval: i64, bars: usize, seed: u64) -> SyntheticMarket {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.002).expect("finite");
    let unit = Normal::new(0.0, 1.0).expect("finite");
    let mut closes = Vec::with_capacity(bars);
    let mut p = 100.0;
    for t in 0..bars {
        // bar t closes at the end of move t
        let step = if t % 2 == 0 { 1.05 } else { 0.95 };
        p *= step * (1.0 + jitter.sample(&mut rng));
        closes.push(p);
    }
    let bars_v = bars_from_closes(start, interval, 100.0, &closes, &mut rng);
    // the move after bar t is the move of bar t + 1: up when t + 1 is even
    let sign = |t: usize| if (t + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut metrics = BTreeMap::new();
    metrics.insert("leak".to_string(), bars_v.iter().enumerate().map(|(t, b)| (b.ts, sign(t))).collect());
    metrics.insert(
        "leak_echo".to_string(),
        bars_v.iter().enumerate().map(|(t, b)| (b.ts, sign(t) + 0.1 * unit.sample(&mut rng))).collect(),
    );
    SyntheticMarket { asset, interval, bars: bars_v, metrics }
}

impl SyntheticMarket {
    pub fn range(&self) -> TimeRange {
        TimeRange { start: self.bars[0].ts, end: self.bars[self.bars.len() - 1].ts }
    }

    /// Every bar and metric on the bar grid.
    pub fn frame(&self) -> Result<AlignedFrame, StoreError> {
        align_series(&self.asset, &self.bars, &self.metrics, self.range(), self.interval, 0).map(|(f, _)| f)
    }

    pub fn write_ohlcv_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "ts,open,high,low,close,volume")?;
        for b in &self.bars {
            writeln!(w, "{},{},{},{},{},{}", b.ts, b.open, b.high, b.low, b.close, b.volume)?;
        }
        Ok(())
    }

    pub fn write_metrics_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "ts,name,value")?;
        for (name, series) in &self.metrics {
            for (ts, v) in series {
                writeln!(w, "{ts},{name},{v}")?;
            }
        }
        Ok(())
    }
}
