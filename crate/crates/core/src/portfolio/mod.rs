//! Portfolio composition from per-asset modules: voting, fee-aware
//! accounting, backtests with optional periodic retraining, and the module
//! registry.

mod backtest;
mod ledger;
mod registry;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cm::{AllocationAction, CmError};
use crate::data_store::{AssetId, StoreError};
use crate::metrics::MetricsError;

pub use backtest::{
    run_backtest, ActionRecord, BacktestConfig, BacktestReport, BaselineCurve, RetrainEvent, RetrainPlan, REPORT_FORMAT_VERSION,
};
pub use ledger::{rebalance, simulate, Holdings, RebalanceEvent, Simulation};
pub use registry::{CmRegistry, RegistryEntry};

#[derive(Debug, Error)]
pub enum PortfolioError {
    #[error("no crypto module registered for {0}")]
    MissingCm(AssetId),
    #[error("{0} is already registered")]
    Duplicate(AssetId),
    #[error("{0} is not registered")]
    NotRegistered(AssetId),
    #[error("no price data for {asset} at {ts}")]
    DataGap { asset: AssetId, ts: i64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fee {fee} would consume the whole portfolio value {value}")]
    FeeExceedsValue { fee: f64, value: f64 },
    #[error("module for {asset} cannot decide at {ts}: {source}")]
    Inference { asset: AssetId, ts: i64, source: CmError },
    #[error(transparent)]
    Cm(#[from] CmError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Voted weights over `m` cryptos plus cash, kept as integer numerators over
/// the common denominator `m` so that they sum to one exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    numerators: Vec<u32>,
}

impl PortfolioWeights {
    pub fn all_cash(m: usize) -> Self {
        Self { numerators: vec![0; m] }
    }

    pub fn m(&self) -> usize {
        self.numerators.len()
    }

    pub fn crypto(&self, i: usize) -> f64 {
        f64::from(self.numerators[i]) / self.m() as f64
    }

    pub fn cash(&self) -> f64 {
        let held: u32 = self.numerators.iter().sum();
        (self.m() as u32 - held) as f64 / self.m() as f64
    }

    /// `(numerator, denominator)` of each crypto weight and of cash.
    pub fn rational(&self) -> (Vec<u32>, u32, u32) {
        let m = self.m() as u32;
        (self.numerators.clone(), m - self.numerators.iter().sum::<u32>(), m)
    }

    /// `[crypto_1 .. crypto_m, cash]`.
    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.m()).map(|i| self.crypto(i)).chain(std::iter::once(self.cash())).collect()
    }
}

/// Averages the crypto side of each module's allocation; the remainder is cash.
pub fn vote_weights(votes: &[AllocationAction]) -> Result<PortfolioWeights, PortfolioError> {
    if votes.is_empty() {
        return Err(PortfolioError::Config("a portfolio needs at least one module".into()));
    }
    Ok(PortfolioWeights { numerators: votes.iter().map(|a| a.index() as u32).collect() })
}
