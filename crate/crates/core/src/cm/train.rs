use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data_store::AlignedFrame;
use crate::refinery::{CorrelationTable, RefinedFeatureFrame, Refinery, RefineryConfig, SelectedMetricSet};
use crate::rl::{train_dqn, Architecture, Evaluator, QNetwork, RlError, Tensor3, TrainConfig};
use crate::time::TimeRange;

use super::env::{greedy_log_wealth, greedy_signal_reward, EamEnv, SamEnv};
use super::observation::{build_eam_state, build_sam_state, first_observable};
use super::reward::RewardConfig;
use super::{greedy_signals, shared, CmError, CryptoModule, Signal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmConfig {
    /// Observation window `n` in bars.
    pub window: usize,
    pub refinery: RefineryConfig,
    pub reward: RewardConfig,
    pub dqn: TrainConfig,
    /// Train a signal agent first and feed its signals to the allocation agent.
    pub use_eam: bool,
    /// Checkpoint evaluation period in environment steps.
    pub eval_every: usize,
}

impl Default for CmConfig {
    fn default() -> Self {
        Self {
            window: 32,
            refinery: RefineryConfig::default(),
            reward: RewardConfig::default(),
            dqn: TrainConfig::default(),
            use_eam: false,
            eval_every: 500,
        }
    }
}

impl CmConfig {
    pub fn validate(&self) -> Result<(), CmError> {
        if self.window < 5 {
            return Err(CmError::Config(format!("window {} is below the minimum of 5 bars", self.window)));
        }
        if self.eval_every == 0 {
            return Err(CmError::Config("eval_every must be positive".into()));
        }
        self.refinery.validate()?;
        self.reward.validate()?;
        self.dqn.validate()?;
        Ok(())
    }
}

/// A trained module plus diagnostics from the fit.
#[derive(Debug, Clone)]
pub struct CmTraining {
    pub module: CryptoModule,
    pub selection: SelectedMetricSet,
    pub table: CorrelationTable,
    /// Greedy validation log wealth of the chosen allocation checkpoint.
    pub validation_log_wealth: f64,
    pub validation_signal_reward: Option<f64>,
}

/// Inclusive row span `[first, last]` of decisions inside `range`, starting no
/// earlier than `min_row`.
/// Decisions at rows `first..last`; row `last` only supplies the closing price.
type RowSpan = (usize, usize);

fn decision_rows(frame: &AlignedFrame, range: &TimeRange, min_row: usize) -> Option<RowSpan> {
    let first = frame.timestamps.iter().position(|ts| range.contains(*ts))?.max(min_row);
    let last = frame.timestamps.iter().rposition(|ts| range.contains(*ts))?;
    (last > first).then_some((first, last))
}

fn ratios(frame: &AlignedFrame, (first, last): RowSpan) -> Vec<f64> {
    (first..last).map(|t| frame.close(t + 1) / frame.close(t)).collect()
}

struct Span {
    states: Vec<Arc<Tensor3>>,
    ratios: Vec<f64>,
}

fn span<F>(frame: &AlignedFrame, rows: RowSpan, build: F) -> Result<Span, CmError>
where
    F: Fn(usize) -> Result<Tensor3, CmError>,
{
    let states = (rows.0..=rows.1).map(|t| build(t).map(shared)).collect::<Result<_, _>>()?;
    Ok(Span { states, ratios: ratios(frame, rows) })
}

/// Trains a module on `train` and selects the checkpoint with the best greedy
/// validation log wealth. Only rows up to `validation.end` are read; metric
/// selection reads only rows up to `train.end`.
pub fn train_cm(
    frame: &AlignedFrame,
    train: TimeRange,
    validation: TimeRange,
    cfg: &CmConfig,
) -> Result<CmTraining, CmError> {
    cfg.validate()?;
    if validation.start <= train.end {
        return Err(CmError::Config("validation range must follow the training range".into()));
    }
    let frame = frame.truncated(validation.end);
    let fit = Refinery::fit(&frame, &cfg.refinery, train.end)?;
    let refined = fit.refinery.transform(&frame)?;
    let n = cfg.window;

    let (eam, signals, validation_signal_reward) = if cfg.use_eam {
        let (net, score) = train_eam(&frame, &refined, train, validation, cfg)?;
        let signals = greedy_signals(&net, &frame, &refined, n)?;
        (Some(net), Some(signals), Some(score))
    } else {
        (None, None, None)
    };

    let min_row = first_observable(&refined, n) + if cfg.use_eam { n - 1 } else { 0 };
    let (train_rows, val_rows) = spans(&frame, train, validation, min_row, cfg.dqn.batch)?;
    let sam_state = |t| build_sam_state(&frame, &refined, t, n, signals.as_deref()).map(|o| o.tensor);
    let train_span = span(&frame, train_rows, sam_state)?;
    let val_span = span(&frame, val_rows, sam_state)?;

    let f = train_span.states[0].dims().0;
    let net = QNetwork::new(Architecture::Sam4Layer, (f, 2, n), cfg.dqn.seed)?;
    let mut env = SamEnv::new(train_span.states, train_span.ratios, cfg.reward.clone())?;
    let mut score = |net: &QNetwork| {
        greedy_log_wealth(net, &val_span.states, &val_span.ratios, &cfg.reward).map_err(|e| RlError::Config(e.to_string()))
    };
    let outcome = train_dqn(net, &mut env, &cfg.dqn, Some(Evaluator { every: cfg.eval_every, score: &mut score }))?;
    log::info!(
        "{}: allocation agent best validation log wealth {:.6} at step {}",
        frame.asset,
        outcome.best_score.unwrap_or(f64::NAN),
        outcome.best_step
    );

    let module = CryptoModule {
        asset: frame.asset.clone(),
        interval: frame.interval,
        train_range: train,
        validation_range: validation,
        window: n,
        refinery: fit.refinery,
        reward: cfg.reward.clone(),
        sam: outcome.network,
        eam,
    };
    Ok(CmTraining {
        module,
        selection: fit.selection,
        table: fit.table,
        validation_log_wealth: outcome.best_score.unwrap_or(0.0),
        validation_signal_reward,
    })
}

fn spans(
    frame: &AlignedFrame,
    train: TimeRange,
    validation: TimeRange,
    min_row: usize,
    batch: usize,
) -> Result<(RowSpan, RowSpan), CmError> {
    let train_rows = decision_rows(frame, &train, min_row)
        .ok_or_else(|| CmError::InsufficientData(format!("no training decisions after the {min_row}-row warm-up")))?;
    if train_rows.1 - train_rows.0 < batch {
        return Err(CmError::InsufficientData(format!(
            "{} training decisions after warm-up, fewer than one batch of {batch}",
            train_rows.1 - train_rows.0
        )));
    }
    if frame.timestamps.iter().position(|ts| train.contains(*ts)).is_some_and(|r| r < min_row) {
        log::warn!("{}: training range starts inside the warm-up; first decision at row {}", frame.asset, train_rows.0);
    }
    let val_rows = decision_rows(frame, &validation, min_row)
        .ok_or_else(|| CmError::InsufficientData("validation range has fewer than two usable bars".into()))?;
    Ok((train_rows, val_rows))
}

fn train_eam(
    frame: &AlignedFrame,
    refined: &RefinedFeatureFrame,
    train: TimeRange,
    validation: TimeRange,
    cfg: &CmConfig,
) -> Result<(QNetwork, f64), CmError> {
    let n = cfg.window;
    let (train_rows, val_rows) = spans(frame, train, validation, first_observable(refined, n), cfg.dqn.batch)?;
    let eam_state = |t| build_eam_state(frame, refined, t, n).map(|o| o.tensor);
    let train_span = span(frame, train_rows, eam_state)?;
    let val_span = span(frame, val_rows, eam_state)?;

    let f = train_span.states[0].dims().0;
    let dqn = TrainConfig { seed: cfg.dqn.seed.wrapping_add(0x5EED), ..cfg.dqn.clone() };
    let net = QNetwork::new(Architecture::Eam1d, (f, 1, n), dqn.seed)?;
    let mut env = EamEnv::new(train_span.states, &train_span.ratios, cfg.reward.clone())?;
    let mut score = |net: &QNetwork| {
        greedy_signal_reward(net, &val_span.states, &val_span.ratios, &cfg.reward)
            .map_err(|e| RlError::Config(e.to_string()))
    };
    let outcome = train_dqn(net, &mut env, &dqn, Some(Evaluator { every: cfg.eval_every, score: &mut score }))?;
    log::info!(
        "{}: signal agent best validation reward {:.6} at step {}",
        frame.asset,
        outcome.best_score.unwrap_or(f64::NAN),
        outcome.best_step
    );
    Ok((outcome.network, outcome.best_score.unwrap_or(0.0)))
}

/// Signals in row order, paired with timestamps, for rows past the warm-up.
pub fn signal_series(frame: &AlignedFrame, signals: &[Option<Signal>]) -> Vec<super::TradingSignal> {
    frame
        .timestamps
        .iter()
        .zip(signals)
        .filter_map(|(ts, s)| s.map(|action| super::TradingSignal { ts: *ts, action }))
        .collect()
}
