//! The crypto module: a per-asset bundle of a fitted refinery, an optional
//! signal agent (buy/sell/hold) and an allocation agent (cash or crypto).

mod env;
mod format;
mod observation;
mod reward;
mod train;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::CodecError;
use crate::data_store::{AlignedFrame, AssetId};
use crate::refinery::{RefinedFeatureFrame, Refinery, RefineryError};
use crate::rl::{argmax, QNetwork, RlError, Tensor3};
use crate::time::TimeRange;

pub use env::{greedy_log_wealth, greedy_signal_reward, EamEnv, SamEnv};
pub use format::{load_cm, save_cm};
pub use observation::{
    build_eam_state, build_sam_state, first_observable, EamObservation, SamObservation, CASH_ROW, CRYPTO_ROW,
};
pub use reward::{eam_reward, sam_step, RewardConfig};
pub use train::{signal_series, train_cm, CmConfig, CmTraining};

#[derive(Debug, Error)]
pub enum CmError {
    #[error(transparent)]
    Refinery(#[from] RefineryError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("row {t} is inside the warm-up (first usable row is {needed})")]
    Warmup { t: usize, needed: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-positive quantity: {0}")]
    NonPositive(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Trading signal of the signal agent. Action index order is buy, sell, hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Signal {
    Buy,
    Sell,
    Hold,
}

impl Signal {
    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Self::Buy),
            1 => Some(Self::Sell),
            2 => Some(Self::Hold),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Buy => 0,
            Self::Sell => 1,
            Self::Hold => 2,
        }
    }

    /// Value of the signal channel in allocation observations.
    pub fn encode(self) -> f64 {
        match self {
            Self::Buy => 1.0,
            Self::Hold => 0.0,
            Self::Sell => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TradingSignal {
    pub ts: i64,
    pub action: Signal,
}

/// Binary allocation. Action index 0 is cash and 1 is crypto, so a Q-value
/// tie resolves to cash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationAction {
    Cash,
    Crypto,
}

impl AllocationAction {
    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Self::Cash),
            1 => Some(Self::Crypto),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Cash => 0,
            Self::Crypto => 1,
        }
    }

    /// `[cash, crypto]`.
    pub fn weights(self) -> [f64; 2] {
        match self {
            Self::Cash => [1.0, 0.0],
            Self::Crypto => [0.0, 1.0],
        }
    }
}

/// A trained, immutable module for one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct CryptoModule {
    pub asset: AssetId,
    pub interval: i64,
    pub train_range: TimeRange,
    pub validation_range: TimeRange,
    /// Observation window `n` in bars.
    pub window: usize,
    pub refinery: Refinery,
    pub reward: RewardConfig,
    pub sam: QNetwork,
    pub eam: Option<QNetwork>,
}

/// A module's view of one aligned frame: rebuilt features and, with a signal
/// agent, the frozen greedy signal of every row.
#[derive(Debug, Clone)]
pub struct PreparedInputs {
    pub refined: RefinedFeatureFrame,
    pub signals: Option<Vec<Option<Signal>>>,
    /// First row at which an allocation can be inferred.
    pub first_row: usize,
}

impl CryptoModule {
    /// Rebuilds refined features (and signals) for `frame` from raw data.
    /// Every derived row depends only on rows at or before it.
    pub fn prepare(&self, frame: &AlignedFrame) -> Result<PreparedInputs, CmError> {
        if frame.asset != self.asset {
            return Err(CmError::Config(format!("module for {} given data for {}", self.asset, frame.asset)));
        }
        let refined = self.refinery.transform(frame)?;
        let first = first_observable(&refined, self.window);
        match &self.eam {
            None => Ok(PreparedInputs { refined, signals: None, first_row: first }),
            Some(eam) => {
                let signals = greedy_signals(eam, frame, &refined, self.window)?;
                Ok(PreparedInputs { refined, signals: Some(signals), first_row: first + self.window - 1 })
            }
        }
    }

    pub fn observe(&self, frame: &AlignedFrame, inputs: &PreparedInputs, t: usize) -> Result<SamObservation, CmError> {
        if t < inputs.first_row {
            return Err(CmError::Warmup { t, needed: inputs.first_row });
        }
        build_sam_state(frame, &inputs.refined, t, self.window, inputs.signals.as_deref())
    }

    /// Greedy allocation at row `t`; ties go to cash.
    pub fn infer_allocation(
        &self,
        frame: &AlignedFrame,
        inputs: &PreparedInputs,
        t: usize,
    ) -> Result<AllocationAction, CmError> {
        let obs = self.observe(frame, inputs, t)?;
        self.act(&obs.tensor)
    }

    pub fn act(&self, state: &Tensor3) -> Result<AllocationAction, CmError> {
        let q = self.sam.q_values(state)?;
        Ok(AllocationAction::from_index(argmax(&q)).expect("two-action network"))
    }

    /// Rows the module needs before its first decision.
    pub fn warmup_rows(&self) -> usize {
        let base = self.refinery.warmup() + self.window - 1;
        if self.eam.is_some() {
            base + self.window - 1
        } else {
            base
        }
    }
}

/// Greedy signal for every row past the signal agent's warm-up.
pub fn greedy_signals(
    eam: &QNetwork,
    frame: &AlignedFrame,
    refined: &RefinedFeatureFrame,
    n: usize,
) -> Result<Vec<Option<Signal>>, CmError> {
    let first = first_observable(refined, n);
    let mut out = vec![None; frame.len()];
    for (t, slot) in out.iter_mut().enumerate().skip(first) {
        let obs = build_eam_state(frame, refined, t, n)?;
        let q = eam.q_values(&obs.tensor)?;
        *slot = Signal::from_index(argmax(&q));
    }
    Ok(out)
}

pub(crate) fn shared(t: Tensor3) -> Arc<Tensor3> {
    Arc::new(t)
}
