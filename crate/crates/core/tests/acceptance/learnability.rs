use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use crlpm_core::cm::{train_cm, CmConfig};
use crlpm_core::metrics::arr;
use crlpm_core::portfolio::{run_backtest, BacktestConfig, CmRegistry};
use crlpm_core::refinery::RefineryConfig;
use crlpm_core::rl::TrainConfig;
use crlpm_core::synth::alternating;
use crlpm_core::time::TimeRange;

use crate::support::{asset, SIX_HOURS};

const FEE: f64 = 0.001;
const BARS: usize = 700;

/// Growth factor of one bar when holding `a` (1 = crypto) after holding
/// `prev`; switching pays the fee on the whole account.
fn growth(prev: u8, a: u8, r: f64) -> f64 {
    let fee = 1.0 - FEE * (a as f64 - prev as f64).abs();
    fee * if a == 1 { r } else { 1.0 }
}

/// Best final wealth over all cash/crypto switching sequences, starting in
/// cash, by dynamic programming over the two holding states.
fn best_switching_wealth(ratios: &[f64]) -> f64 {
    let mut best = [1.0, f64::NEG_INFINITY];
    for &r in ratios {
        let mut next = [f64::NEG_INFINITY; 2];
        for a in 0..2u8 {
            for prev in 0..2u8 {
                if best[prev as usize].is_finite() {
                    next[a as usize] = next[a as usize].max(best[prev as usize] * growth(prev, a, r));
                }
            }
        }
        best = next;
    }
    best[0].max(best[1])
}

fn exhaustive_wealth(ratios: &[f64]) -> f64 {
    let t = ratios.len();
    (0..1u32 << t)
        .map(|mask| {
            let mut prev = 0u8;
            let mut w = 1.0;
            for (i, &r) in ratios.iter().enumerate() {
                let a = ((mask >> i) & 1) as u8;
                w *= growth(prev, a, r);
                prev = a;
            }
            w
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn alternating_fixture() -> Result<String, String> {
    let sym = asset("ALT");
    let market = alternating(sym.clone(), 0, SIX_HOURS, BARS, 11);
    let frame = market.frame().map_err(|e| e.to_string())?;
    let ts = |row: usize| frame.timestamps[row];
    let range = |a, b| TimeRange::new(ts(a), ts(b)).map_err(|e| e.to_string());

    let cfg = CmConfig {
        window: 8,
        refinery: RefineryConfig { norm_window: 20, pca_window: 30, ..RefineryConfig::default() },
        dqn: TrainConfig {
            gamma: 0.0,
            lr: 0.003,
            max_steps: 16_000,
            eps_decay_steps: 8_000,
            target_sync: 100,
            seed: 1,
            ..TrainConfig::default()
        },
        eval_every: 250,
        ..CmConfig::default()
    };
    let start = Instant::now();
    let trained = train_cm(&frame, range(0, 399)?, range(400, 499)?, &cfg).map_err(|e| e.to_string())?;
    let train_secs = start.elapsed().as_secs_f64();
    if train_secs >= 300.0 {
        return Err(format!("training took {train_secs:.0}s (limit 300s)"));
    }

    let mut registry = CmRegistry::new();
    registry.insert("alt.crlm".into(), Arc::new(trained.module)).map_err(|e| e.to_string())?;
    let frames = BTreeMap::from([(sym.clone(), frame.clone())]);
    let bt = BacktestConfig { fee_rate: FEE, ..BacktestConfig::new(vec![sym], range(500, BARS - 1)?) };
    let report = run_backtest(&registry, &frames, &bt, None).map_err(|e| e.to_string())?;
    let strategy = arr(&report.strategy).map_err(|e| e.to_string())?;
    let hold = arr(&report.baselines[0].values).map_err(|e| e.to_string())?;

    let ratios: Vec<f64> = (500..BARS - 1).map(|t| frame.close(t + 1) / frame.close(t)).collect();
    for len in [1, 5, 12] {
        let (dp, brute) = (best_switching_wealth(&ratios[..len]), exhaustive_wealth(&ratios[..len]));
        if (dp - brute).abs() > 1e-12 * brute {
            return Err(format!("dynamic programme {dp} disagrees with enumeration {brute} on {len} bars"));
        }
    }
    let best = best_switching_wealth(&ratios) - 1.0;

    let detail = format!(
        "held-out ARR {:.2}%, buy-and-hold {:.2}%, best switching {:.2}%, ratio {:.3}, trained in {train_secs:.1}s",
        100.0 * strategy,
        100.0 * hold,
        100.0 * best,
        strategy / best
    );
    if strategy <= hold {
        return Err(format!("does not beat buy-and-hold: {detail}"));
    }
    if strategy < 0.8 * best {
        return Err(format!("below 80% of the best switching policy: {detail}"));
    }
    Ok(detail)
}
