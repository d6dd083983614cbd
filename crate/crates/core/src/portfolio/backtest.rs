use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cm::{train_cm, AllocationAction, CmConfig, CryptoModule, PreparedInputs};
use crate::data_store::{AlignedFrame, AssetId};
use crate::metrics::{summarize, Comparison, Curves};
use crate::time::{TimeRange, SECONDS_PER_DAY};

use super::ledger::{simulate, RebalanceEvent};
use super::{vote_weights, CmRegistry, PortfolioError};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Portfolio members in column order.
    pub assets: Vec<AssetId>,
    pub range: TimeRange,
    pub initial_capital: f64,
    pub fee_rate: f64,
    /// Bars between reallocations.
    pub rebalance_every: usize,
}

impl BacktestConfig {
    pub fn new(assets: Vec<AssetId>, range: TimeRange) -> Self {
        Self { assets, range, initial_capital: 10_000.0, fee_rate: 0.001, rebalance_every: 1 }
    }

    pub fn validate(&self) -> Result<(), PortfolioError> {
        let bad = |m: String| Err(PortfolioError::Config(m));
        if self.assets.is_empty() {
            return bad("portfolio is empty".into());
        }
        let mut seen = self.assets.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.assets.len() {
            return bad("portfolio lists an asset twice".into());
        }
        if !(self.initial_capital > 0.0) || !self.initial_capital.is_finite() {
            return bad(format!("initial capital {} is not positive", self.initial_capital));
        }
        if !(0.0..0.1).contains(&self.fee_rate) {
            return bad(format!("fee rate {} outside [0, 0.1)", self.fee_rate));
        }
        if self.rebalance_every == 0 {
            return bad("rebalance interval must be at least one bar".into());
        }
        Ok(())
    }
}

/// Periodic retraining with expanding training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainPlan {
    pub every_days: u32,
    pub config: CmConfig,
}

impl RetrainPlan {
    /// Boundaries `range.start + k * every_days` strictly inside `range`.
    pub fn boundaries(&self, range: &TimeRange) -> Vec<i64> {
        let step = i64::from(self.every_days) * SECONDS_PER_DAY;
        (1..).map(|k| range.start + k * step).take_while(|b| *b < range.end).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainEvent {
    pub boundary: i64,
    pub asset: AssetId,
    pub train_range: TimeRange,
    pub validation_range: TimeRange,
    /// `None` on success; otherwise why the previous module was kept.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub ts: i64,
    pub asset: AssetId,
    pub action: AllocationAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCurve {
    pub asset: AssetId,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub format_version: u32,
    pub config: BacktestConfig,
    pub retrain_every_days: Option<u32>,
    pub interval: i64,
    pub timestamps: Vec<i64>,
    pub strategy: Vec<f64>,
    pub baselines: Vec<BaselineCurve>,
    pub events: Vec<RebalanceEvent>,
    pub actions: Vec<ActionRecord>,
    pub retrains: Vec<RetrainEvent>,
    /// Strategy first, then one buy-and-hold column per asset.
    pub summary: Comparison,
    pub notes: Vec<String>,
}

impl BacktestReport {
    pub fn curves(&self) -> Curves {
        let mut cols = vec![("strategy".to_string(), self.strategy.clone())];
        cols.extend(self.baselines.iter().map(|b| (format!("baseline_{}", b.asset.symbol()), b.values.clone())));
        Curves { timestamps: self.timestamps.clone(), columns: cols }
    }

    pub fn actions_for(&self, asset: &AssetId) -> Vec<(i64, AllocationAction)> {
        self.actions.iter().filter(|a| &a.asset == asset).map(|a| (a.ts, a.action)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PortfolioError> {
        let report: Self = serde_json::from_str(text)
            .map_err(|e| PortfolioError::Io { path: "report".into(), message: e.to_string() })?;
        if report.format_version != REPORT_FORMAT_VERSION {
            return Err(PortfolioError::Config(format!("unsupported report version {}", report.format_version)));
        }
        Ok(report)
    }

    /// Writes `<stem>.json` and the curve file `<stem>.csv`.
    pub fn write(&self, stem: &Path) -> Result<(), PortfolioError> {
        let json = stem.with_extension("json");
        let csv = stem.with_extension("csv");
        let io = |p: &Path, e: std::io::Error| PortfolioError::Io { path: p.to_path_buf(), message: e.to_string() };
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        }
        fs::write(&json, self.to_json() + "\n").map_err(|e| io(&json, e))?;
        let mut buf = Vec::new();
        self.curves().write_csv(&mut buf).map_err(|e| io(&csv, e))?;
        fs::write(&csv, buf).map_err(|e| io(&csv, e))
    }
}

struct Member<'a> {
    asset: &'a AssetId,
    frame: &'a AlignedFrame,
    /// Frame row of each backtest row.
    rows: Vec<usize>,
    module: Arc<CryptoModule>,
    inputs: PreparedInputs,
}

fn prepare(module: &CryptoModule, frame: &AlignedFrame) -> Result<PreparedInputs, PortfolioError> {
    Ok(module.prepare(frame)?)
}

/// Retrains one module on an expanding window that ends at `boundary`,
/// keeping the original validation length.
fn retrain(module: &CryptoModule, frame: &AlignedFrame, boundary: i64, plan: &RetrainPlan) -> (RetrainEvent, Option<CryptoModule>) {
    let val_len = module.validation_range.duration();
    let validation = TimeRange { start: boundary - val_len, end: boundary };
    let train = TimeRange { start: module.train_range.start, end: validation.start - 1 };
    let mut event =
        RetrainEvent { boundary, asset: module.asset.clone(), train_range: train, validation_range: validation, error: None };
    if train.end <= train.start {
        event.error = Some("expanded training window is empty".into());
        return (event, None);
    }
    let cfg = CmConfig { window: module.window, refinery: module.refinery.config.clone(), ..plan.config.clone() };
    match train_cm(frame, train, validation, &cfg) {
        Ok(t) => (event, Some(t.module)),
        Err(e) => {
            event.error = Some(e.to_string());
            (event, None)
        }
    }
}

/// Backtests the registered modules of `cfg.assets` over `cfg.range`.
///
/// At every rebalance row each module infers an allocation from data up to
/// that row, the allocations are voted into portfolio weights and the account
/// rebalances; holdings drift between rebalances. `frames` must cover the
/// range plus each module's warm-up (and, with retraining, its training
/// history).
pub fn run_backtest(
    registry: &CmRegistry,
    frames: &BTreeMap<AssetId, AlignedFrame>,
    cfg: &BacktestConfig,
    retrain_plan: Option<&RetrainPlan>,
) -> Result<BacktestReport, PortfolioError> {
    cfg.validate()?;
    if let Some(p) = retrain_plan {
        if p.every_days == 0 {
            return Err(PortfolioError::Config("retrain cadence must be positive".into()));
        }
    }
    let first = &cfg.assets[0];
    let lead = frames.get(first).ok_or(PortfolioError::DataGap { asset: first.clone(), ts: cfg.range.start })?;
    let timestamps: Vec<i64> = lead.timestamps.iter().copied().filter(|ts| cfg.range.contains(*ts)).collect();
    if timestamps.len() < 2 {
        return Err(PortfolioError::DataGap { asset: first.clone(), ts: cfg.range.start });
    }
    let interval = lead.interval;

    let mut members = Vec::with_capacity(cfg.assets.len());
    for asset in &cfg.assets {
        let entry = registry.get(asset).ok_or_else(|| PortfolioError::MissingCm(asset.clone()))?;
        let frame = frames.get(asset).ok_or(PortfolioError::DataGap { asset: asset.clone(), ts: timestamps[0] })?;
        if frame.interval != interval {
            return Err(PortfolioError::Config(format!("{asset} uses a {}s bar interval, expected {interval}s", frame.interval)));
        }
        let rows = timestamps
            .iter()
            .map(|ts| frame.index_of(*ts).ok_or(PortfolioError::DataGap { asset: asset.clone(), ts: *ts }))
            .collect::<Result<Vec<_>, _>>()?;
        let inputs = prepare(&entry.module, frame)?;
        if inputs.first_row > rows[0] {
            return Err(PortfolioError::Inference {
                asset: asset.clone(),
                ts: timestamps[0],
                source: crate::cm::CmError::Warmup { t: rows[0], needed: inputs.first_row },
            });
        }
        members.push(Member { asset, frame, rows, module: entry.module.clone(), inputs });
    }

    let closes: Vec<Vec<f64>> = members.iter().map(|m| m.rows.iter().map(|&r| m.frame.close(r)).collect()).collect();
    let mut boundaries = retrain_plan.map(|p| p.boundaries(&cfg.range)).unwrap_or_default().into_iter().peekable();
    let mut actions = Vec::new();
    let mut retrains = Vec::new();
    let last = timestamps.len() - 1;

    let sim = simulate(&timestamps, &closes, cfg.initial_capital, cfg.fee_rate, |i| {
        if let Some(plan) = retrain_plan {
            while let Some(&b) = boundaries.peek() {
                if b > timestamps[i] {
                    break;
                }
                boundaries.next();
                for m in members.iter_mut() {
                    let (event, fresh) = retrain(&m.module, m.frame, b, plan);
                    match fresh {
                        Some(module) => {
                            log::info!("{}: retrained at boundary {b}", m.asset);
                            m.inputs = prepare(&module, m.frame)?;
                            m.module = Arc::new(module);
                        }
                        None => log::warn!(
                            "{}: retraining at {b} failed, keeping previous module: {}",
                            m.asset,
                            event.error.as_deref().unwrap_or("")
                        ),
                    }
                    retrains.push(event);
                }
            }
        }
        if i == last || i % cfg.rebalance_every != 0 {
            return Ok(None);
        }
        let mut votes = Vec::with_capacity(members.len());
        for m in &members {
            let t = m.rows[i];
            let action = m.module.infer_allocation(m.frame, &m.inputs, t).map_err(|source| PortfolioError::Inference {
                asset: m.asset.clone(),
                ts: timestamps[i],
                source,
            })?;
            actions.push(ActionRecord { ts: timestamps[i], asset: m.asset.clone(), action });
            votes.push(action);
        }
        vote_weights(&votes).map(Some)
    })?;

    let mut columns = vec![("strategy".to_string(), summarize(&timestamps, &sim.values, interval)?)];
    let mut baselines = Vec::with_capacity(members.len());
    for (m, c) in members.iter().zip(&closes) {
        let values: Vec<f64> = c.iter().map(|p| cfg.initial_capital * (p / c[0])).collect();
        let mut stats = summarize(&timestamps, &values, interval)?;
        stats.arr = c[last] / c[0] - 1.0;
        columns.push((m.asset.symbol().to_string(), stats));
        baselines.push(BaselineCurve { asset: m.asset.clone(), values });
    }

    Ok(BacktestReport {
        format_version: REPORT_FORMAT_VERSION,
        config: cfg.clone(),
        retrain_every_days: retrain_plan.map(|p| p.every_days),
        interval,
        timestamps,
        strategy: sim.values,
        baselines,
        events: sim.events,
        actions,
        retrains,
        summary: Comparison { columns },
        notes: vec![
            "ARR = V_end / V_start - 1; DRR = mean of UTC-daily compounded returns".into(),
            "SR = Sortino ratio on daily returns, target 0, not annualized".into(),
        ],
    })
}
