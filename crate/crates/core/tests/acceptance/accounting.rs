use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crlpm_core::cm::AllocationAction;
use crlpm_core::data_store::{AlignedFrame, AssetId};
use crlpm_core::portfolio::{run_backtest, simulate, vote_weights, BacktestConfig, BacktestReport, CmRegistry};
use crlpm_core::synth::{generate, MarketSpec};
use crlpm_core::time::TimeRange;

use crate::support::{asset, forced_module, rel_close, SIX_HOURS};

const TOL: f64 = 1e-9;

fn random_walks(rng: &mut ChaCha8Rng, m: usize, t: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| {
            let mut p = rng.random_range(1.0..1_000.0);
            (0..t)
                .map(|_| {
                    p *= (rng.random_range(-0.05..0.05f64)).exp();
                    p
                })
                .collect()
        })
        .collect()
}

/// Random vote per row (or no rebalance at all), reproducible from `seed`.
fn random_decisions(seed: u64, m: usize, t: usize) -> Vec<Option<Vec<AllocationAction>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..t)
        .map(|_| {
            rng.random_bool(0.7).then(|| {
                (0..m)
                    .map(|_| if rng.random_bool(0.5) { AllocationAction::Crypto } else { AllocationAction::Cash })
                    .collect()
            })
        })
        .collect()
}

/// Without fees, wealth evolves as `V' = V * (cash + sum_i w_i * p_i'/p_i)`
/// with the weights drifting between rebalances.
fn zero_fee_identity(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let (m, t) = (3, 10_000);
    let closes = random_walks(rng, m, t);
    let ts: Vec<i64> = (0..t as i64).collect();
    let decisions = random_decisions(rng.random(), m, t);
    let initial = 10_000.0;
    let sim = simulate(&ts, &closes, initial, 0.0, |row| {
        Ok(decisions[row].as_ref().map(|v| vote_weights(v).expect("votes")))
    })
    .map_err(|e| e.to_string())?;

    let mut value = initial;
    let mut w = vec![0.0; m + 1];
    w[m] = 1.0;
    for row in 0..t {
        if row > 0 {
            let growth: Vec<f64> = (0..m).map(|i| closes[i][row] / closes[i][row - 1]).chain([1.0]).collect();
            let factor: f64 = w.iter().zip(&growth).map(|(a, g)| a * g).sum();
            value *= factor;
            for (a, g) in w.iter_mut().zip(&growth) {
                *a *= g / factor;
            }
        }
        if !rel_close(sim.values[row], value, TOL) {
            return Err(format!("row {row}: simulated {} vs identity {value}", sim.values[row]));
        }
        if let Some(votes) = &decisions[row] {
            let held = votes.iter().filter(|a| **a == AllocationAction::Crypto).count();
            for (i, a) in votes.iter().enumerate() {
                w[i] = if *a == AllocationAction::Crypto { 1.0 / m as f64 } else { 0.0 };
            }
            w[m] = (m - held) as f64 / m as f64;
        }
    }
    Ok(())
}

fn fee_monotone(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let fees = [0.0, 0.0005, 0.001, 0.005];
    for case in 0..50 {
        let (m, t) = (rng.random_range(1..=4), rng.random_range(50..=2_000));
        let closes = random_walks(rng, m, t);
        let ts: Vec<i64> = (0..t as i64).collect();
        let decisions = random_decisions(rng.random(), m, t);
        let mut prev: Option<Vec<f64>> = None;
        for fee in fees {
            let sim = simulate(&ts, &closes, 1_000.0, fee, |row| {
                Ok(decisions[row].as_ref().map(|v| vote_weights(v).expect("votes")))
            })
            .map_err(|e| e.to_string())?;
            if let Some(p) = &prev {
                if let Some(row) = (0..t).find(|&r| sim.values[r] > p[r]) {
                    return Err(format!("case {case}: fee {fee} ends row {row} richer than a lower fee"));
                }
            }
            prev = Some(sim.values);
        }
    }
    Ok(())
}

fn market(sym: &str, seed: u64) -> Result<(AssetId, AlignedFrame), String> {
    let id = asset(sym);
    let frame = generate(&MarketSpec::new(id.clone(), 0, SIX_HOURS, 400, seed)).frame().map_err(|e| e.to_string())?;
    Ok((id, frame))
}

fn forced_backtest(q: [f64; 2], syms: &[&str], fee: f64) -> Result<BacktestReport, String> {
    let mut registry = CmRegistry::new();
    let mut frames = BTreeMap::new();
    for (i, sym) in syms.iter().enumerate() {
        let (id, frame) = market(sym, 70 + i as u64)?;
        let module = forced_module(id.clone(), "signal_00", q, 8);
        registry.insert(format!("{sym}.crlm").into(), Arc::new(module)).map_err(|e| e.to_string())?;
        frames.insert(id, frame);
    }
    let assets = syms.iter().map(|s| asset(s)).collect();
    let range = TimeRange::new(200 * SIX_HOURS, 399 * SIX_HOURS).map_err(|e| e.to_string())?;
    let cfg = BacktestConfig { fee_rate: fee, ..BacktestConfig::new(assets, range) };
    run_backtest(&registry, &frames, &cfg, None).map_err(|e| e.to_string())
}

pub fn identities() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    zero_fee_identity(&mut rng)?;

    let cash = forced_backtest([1.0, 0.0], &["CSA", "CSB"], 0.001)?;
    if let Some(v) = cash.strategy.iter().find(|v| **v != cash.config.initial_capital) {
        return Err(format!("always-cash value {v} differs from the initial capital"));
    }

    let hold = forced_backtest([0.0, 1.0], &["HLD"], 0.0)?;
    let baseline = &hold.baselines[0].values;
    if let Some(row) = (0..baseline.len()).find(|&r| !rel_close(hold.strategy[r], baseline[r], TOL)) {
        return Err(format!("always-crypto row {row}: {} vs baseline {}", hold.strategy[row], baseline[row]));
    }

    fee_monotone(&mut rng)?;
    let mut prev = f64::INFINITY;
    for fee in [0.0, 0.0005, 0.001, 0.005] {
        let end = *forced_backtest([0.0, 1.0], &["FEA", "FEB"], fee)?.strategy.last().expect("non-empty");
        if end > prev {
            return Err(format!("backtest at fee {fee} ends at {end}, above {prev} at a lower fee"));
        }
        prev = end;
    }
    Ok("zero-fee identity over 10 000 bars, exact cash preservation, buy-and-hold match, monotone fees".into())
}
