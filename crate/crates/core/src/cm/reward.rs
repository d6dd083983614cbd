use serde::{Deserialize, Serialize};

use super::{AllocationAction, CmError, Signal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Fraction of traded value paid per unit of turnover.
    pub fee_rate: f64,
    pub eam_hold_reward: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { fee_rate: 0.001, eam_hold_reward: 0.0 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), CmError> {
        if !(0.0..0.1).contains(&self.fee_rate) {
            return Err(CmError::Config(format!("fee_rate {} outside [0, 0.1)", self.fee_rate)));
        }
        if !self.eam_hold_reward.is_finite() {
            return Err(CmError::Config("eam_hold_reward must be finite".into()));
        }
        Ok(())
    }
}

/// Signal-aligned log return: buy earns `log_return`, sell earns its
/// negation, hold earns the configured constant.
pub fn eam_reward(signal: Signal, log_return: f64, cfg: &RewardConfig) -> f64 {
    match signal {
        Signal::Buy => log_return,
        Signal::Sell => -log_return,
        Signal::Hold => cfg.eam_hold_reward,
    }
}

/// One bar of the two-asset (cash, crypto) account.
///
/// Returns `(ln g, g)` with
/// `g = (1 - fee_rate * |crypto' - crypto|) * (cash' + crypto' * price_ratio)`.
pub fn sam_step(
    prev_weights: [f64; 2],
    action: AllocationAction,
    price_ratio: f64,
    cfg: &RewardConfig,
) -> Result<(f64, f64), CmError> {
    if !(price_ratio > 0.0) || !price_ratio.is_finite() {
        return Err(CmError::NonPositive(format!("price ratio {price_ratio}")));
    }
    let [cash, crypto] = action.weights();
    let turnover = (crypto - prev_weights[1]).abs();
    let g = (1.0 - cfg.fee_rate * turnover) * (cash + crypto * price_ratio);
    if !(g > 0.0) {
        return Err(CmError::NonPositive(format!("value factor {g}")));
    }
    Ok((g.ln(), g))
}
