//! Shared fixtures for the acceptance criteria.

use crlpm_core::cm::{CmConfig, CryptoModule, RewardConfig};
use crlpm_core::data_store::AssetId;
use crlpm_core::refinery::{Refinery, RefineryConfig};
use crlpm_core::rl::{Architecture, QNetwork, TrainConfig};
use crlpm_core::time::TimeRange;

pub const SIX_HOURS: i64 = 21_600;
/// 2021-01-01T00:00:00Z.
pub const JAN_2021: i64 = 1_609_459_200;

pub fn asset(sym: &str) -> AssetId {
    AssetId::new(sym).expect("valid symbol")
}

pub fn small_refinery() -> RefineryConfig {
    RefineryConfig { norm_window: 20, pca_window: 40, ..RefineryConfig::default() }
}

/// A quick training setup for multi-asset flows.
pub fn small_cm_config(seed: u64) -> CmConfig {
    CmConfig {
        window: 8,
        refinery: small_refinery(),
        reward: RewardConfig::default(),
        dqn: TrainConfig {
            max_steps: 1_500,
            eps_decay_steps: 1_000,
            buffer_capacity: 2_000,
            target_sync: 100,
            seed,
            ..TrainConfig::default()
        },
        use_eam: false,
        eval_every: 250,
    }
}

/// A module whose allocation network outputs the constant Q-values `q`
/// (`[cash, crypto]`) regardless of input. It refines the single metric
/// `metric`.
pub fn forced_module(asset: AssetId, metric: &str, q: [f64; 2], window: usize) -> CryptoModule {
    let mut sam = QNetwork::new(Architecture::Sam4Layer, (6, 2, window), 0).expect("network");
    sam.set_constant_output(&q).expect("two outputs");
    CryptoModule {
        asset,
        interval: SIX_HOURS,
        train_range: TimeRange { start: 0, end: 1 },
        validation_range: TimeRange { start: 2, end: 3 },
        window,
        refinery: Refinery { config: small_refinery(), selected: vec![metric.to_string()] },
        reward: RewardConfig::default(),
        sam,
        eam: None,
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
