//! Metric refinement: multi-horizon returns, correlation-ranked metric
//! selection, rolling normalization and rolling PCA.
//!
//! Selection is fitted once on a training range; the rolling transforms are
//! then applied bar by bar and only ever look backwards.

mod correlation;
mod transform;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use correlation::{
    correlation_table, k_period_returns, pearson, rank_metrics, select_valid_metrics, CorrelationEntry,
    CorrelationTable, Provenance, SelectedMetric, SelectedMetricSet,
};
pub use transform::{rolling_normalize, rolling_pca, Normalized, RefinedFeatureFrame, WindowPca};

use crate::data_store::AlignedFrame;

#[derive(Debug, Error, PartialEq)]
pub enum RefineryError {
    #[error("series too short: need {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-positive price {0}")]
    NonPositivePrice(f64),
    #[error("frame has no metrics")]
    NoMetrics,
    #[error("every correlation is undefined (constant metrics or returns)")]
    Degenerate,
    #[error("selected metric `{0}` is missing from the frame")]
    MissingMetric(String),
    #[error("invalid refinery configuration: {0}")]
    BadConfig(String),
}

/// Which return a metric value at bar t is paired with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Return over (t, t + k]: the metric is tested as a predictor.
    #[default]
    Forward,
    /// Return over (t - k, t].
    Contemporaneous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonConfig {
    /// Return horizons in bars, distinct and ascending.
    pub horizons: [usize; 3],
    pub top_per_group: usize,
    pub final_count: usize,
    pub pairing: Pairing,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self { horizons: [12, 24, 48], top_per_group: 5, final_count: 10, pairing: Pairing::Forward }
    }
}

impl HorizonConfig {
    pub fn validate(&self) -> Result<(), RefineryError> {
        let [a, b, c] = self.horizons;
        if a == 0 || !(a < b && b < c) {
            return Err(RefineryError::BadConfig(format!(
                "horizons {:?} must be positive, distinct and ascending",
                self.horizons
            )));
        }
        if self.top_per_group == 0 || self.final_count == 0 {
            return Err(RefineryError::BadConfig("top_per_group and final_count must be positive".into()));
        }
        if self.final_count > 6 * self.top_per_group {
            return Err(RefineryError::BadConfig(format!(
                "final_count {} exceeds 3 x 2 x top_per_group = {}",
                self.final_count,
                6 * self.top_per_group
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineryConfig {
    pub horizons: HorizonConfig,
    pub norm_window: usize,
    pub pca_window: usize,
    pub variance_target: f64,
    pub epsilon: f64,
}

impl Default for RefineryConfig {
    fn default() -> Self {
        Self {
            horizons: HorizonConfig::default(),
            norm_window: 50,
            pca_window: 200,
            variance_target: 0.80,
            epsilon: 1e-8,
        }
    }
}

impl RefineryConfig {
    pub fn validate(&self) -> Result<(), RefineryError> {
        self.horizons.validate()?;
        if self.norm_window < 2 {
            return Err(RefineryError::BadConfig("norm_window must be at least 2".into()));
        }
        if self.pca_window < self.horizons.final_count + 1 {
            return Err(RefineryError::BadConfig(format!(
                "pca_window {} must exceed final_count {}",
                self.pca_window, self.horizons.final_count
            )));
        }
        if !(self.variance_target > 0.0 && self.variance_target <= 1.0) {
            return Err(RefineryError::BadConfig("variance_target must lie in (0, 1]".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(RefineryError::BadConfig("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Rows consumed before the first refined feature row.
    pub fn warmup(&self) -> usize {
        self.norm_window - 1 + self.pca_window - 1
    }
}

/// A fitted refinery: the selected metric names plus the transform
/// configuration. Enough to rebuild features from raw aligned data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinery {
    pub config: RefineryConfig,
    pub selected: Vec<String>,
}

/// Everything produced while fitting a [`Refinery`].
#[derive(Debug, Clone)]
pub struct RefineryFit {
    pub refinery: Refinery,
    pub selection: SelectedMetricSet,
    pub table: CorrelationTable,
}

impl Refinery {
    /// Selects metrics using only rows with timestamp `<= through_ts`.
    pub fn fit(frame: &AlignedFrame, config: &RefineryConfig, through_ts: i64) -> Result<RefineryFit, RefineryError> {
        config.validate()?;
        let sample = frame.truncated(through_ts);
        let table = correlation_table(&sample, &config.horizons)?;
        let selection = rank_metrics(&table, &config.horizons)?;
        if selection.shortfall {
            log::warn!(
                "{}: only {} metric(s) available for selection (wanted {})",
                frame.asset,
                selection.metrics.len(),
                config.horizons.final_count
            );
        }
        let refinery = Refinery { config: config.clone(), selected: selection.names() };
        Ok(RefineryFit { refinery, selection, table })
    }

    pub fn c_max(&self) -> usize {
        self.selected.len()
    }

    pub fn warmup(&self) -> usize {
        self.config.warmup()
    }

    /// Rolling features for every row of `frame`.
    pub fn transform(&self, frame: &AlignedFrame) -> Result<RefinedFeatureFrame, RefineryError> {
        let cols: Vec<usize> = self
            .selected
            .iter()
            .map(|n| frame.metric_index(n).ok_or_else(|| RefineryError::MissingMetric(n.clone())))
            .collect::<Result<_, _>>()?;
        let picked = frame.metrics.select_columns(&cols);
        let normalized = rolling_normalize(&picked, self.config.norm_window, self.config.epsilon)?;
        rolling_pca(&normalized, &frame.timestamps, self.config.pca_window, self.config.variance_target)
    }
}
