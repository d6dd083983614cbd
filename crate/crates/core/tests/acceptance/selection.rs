use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crlpm_core::data_store::AlignedFrame;
use crlpm_core::refinery::{select_valid_metrics, HorizonConfig, Pairing};
use crlpm_core::synth::{generate, MarketSpec};

use crate::support::{asset, SIX_HOURS};

/// Textbook single-pass Pearson; `None` when either side is constant.
fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return None;
    }
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let num = n * sxy - sx * sy;
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    Some((num / den).clamp(-1.0, 1.0))
}

#[derive(Debug)]
struct OracleSelected {
    name: String,
    frequency: usize,
    max_abs_r: f64,
}

/// Brute force: a metric's position at a horizon is the number of metrics
/// that sort before it (greater r, or equal r and smaller name); it is in the
/// horizon's group when that position is among the first or last
/// `top_per_group`. Final order: frequency desc, max |r| desc, name asc.
fn oracle_select(frame: &AlignedFrame, cfg: &HorizonConfig) -> Vec<OracleSelected> {
    let close = frame.closes();
    let t = close.len();
    let names = &frame.metric_names;
    let mut freq = vec![0usize; names.len()];
    let mut best = vec![0.0f64; names.len()];
    for &k in &cfg.horizons {
        let ret: Vec<f64> = (0..t - k).map(|i| close[i + k] / close[i] - 1.0).collect();
        let rs: Vec<Option<f64>> = (0..names.len())
            .map(|j| {
                let col: Vec<f64> = frame.metrics.column(j).iter().copied().collect();
                let x = match cfg.pairing {
                    Pairing::Forward => col[..t - k].to_vec(),
                    Pairing::Contemporaneous => col[k..].to_vec(),
                };
                oracle_pearson(&x, &ret)
            })
            .collect();
        let defined: Vec<usize> = (0..names.len()).filter(|&j| rs[j].is_some()).collect();
        let n = defined.len();
        let keep = cfg.top_per_group.min(n);
        for &j in &defined {
            let rj = rs[j].unwrap();
            let before = defined
                .iter()
                .filter(|&&i| {
                    let ri = rs[i].unwrap();
                    ri > rj || (ri == rj && names[i] < names[j])
                })
                .count();
            if before < keep || before >= n - keep {
                freq[j] += 1;
                best[j] = best[j].max(rj.abs());
            }
        }
    }
    let mut picked: Vec<usize> = (0..names.len()).filter(|&j| freq[j] > 0).collect();
    // selection sort with the documented comparator
    let mut out = Vec::new();
    while !picked.is_empty() && out.len() < cfg.final_count {
        let mut top = 0;
        for i in 1..picked.len() {
            let (a, b) = (picked[i], picked[top]);
            let better = freq[a] > freq[b]
                || (freq[a] == freq[b] && best[a] > best[b])
                || (freq[a] == freq[b] && best[a] == best[b] && names[a] < names[b]);
            if better {
                top = i;
            }
        }
        let j = picked.remove(top);
        out.push(OracleSelected { name: names[j].clone(), frequency: freq[j], max_abs_r: best[j] });
    }
    out
}

fn random_frame(rng: &mut ChaCha8Rng) -> AlignedFrame {
    let t = rng.random_range(52..=500);
    let k = rng.random_range(1..=40);
    let mut close = Vec::with_capacity(t);
    let mut p = 50.0;
    for _ in 0..t {
        p *= 1.0 + rng.random_range(-0.03..0.03);
        close.push(p);
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let kind = rng.random_range(0..10);
        let col: Vec<f64> = match kind {
            // constant column: undefined correlation
            0 => vec![rng.random_range(-1.0..1.0); t],
            // exact duplicate of an earlier column: tied r, broken by name
            1 if j > 0 => cols[rng.random_range(0..j)].clone(),
            // mildly informative about future prices
            2 | 3 => (0..t).map(|i| close[(i + 12).min(t - 1)] / close[i] + rng.random_range(-0.05..0.05)).collect(),
            _ => (0..t).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        cols.push(col);
    }
    AlignedFrame {
        asset: asset("RND"),
        interval: SIX_HOURS,
        timestamps: (0..t as i64).map(|i| i * SIX_HOURS).collect(),
        ohlcv: DMatrix::from_fn(t, 5, |r, c| if c == 4 { 1.0 } else { close[r] }),
        metrics: DMatrix::from_fn(t, k, |r, c| cols[c][r]),
        metric_names: (0..k).map(|j| format!("m{:02}_{}", (j * 7) % 41, j)).collect(),
    }
}

pub fn oracle_equivalence() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut compared = 0;
    for trial in 0..50 {
        let frame = random_frame(&mut rng);
        let top_per_group = rng.random_range(1..=6);
        let cfg = HorizonConfig {
            horizons: [12, 24, 48],
            top_per_group,
            // at most every group member can be selected
            final_count: rng.random_range(1..=12.min(6 * top_per_group)),
            pairing: if rng.random_bool(0.5) { Pairing::Forward } else { Pairing::Contemporaneous },
        };
        let expected = oracle_select(&frame, &cfg);
        let got = match select_valid_metrics(&frame, &cfg) {
            Ok(s) => s,
            Err(_) if expected.is_empty() => continue,
            Err(e) => return Err(format!("trial {trial}: {e}")),
        };
        if got.metrics.len() != expected.len() {
            return Err(format!("trial {trial}: {} selected, oracle {}", got.metrics.len(), expected.len()));
        }
        for (g, e) in got.metrics.iter().zip(&expected) {
            if g.name != e.name || g.frequency != e.frequency || (g.max_abs_r - e.max_abs_r).abs() > 1e-9 {
                return Err(format!("trial {trial}: got {}/{}/{} oracle {e:?}", g.name, g.frequency, g.max_abs_r));
            }
        }
        compared += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 30.0 {
        return Err(format!("took {secs:.1}s (limit 30s)"));
    }
    Ok(format!("{compared}/50 frames identical to brute force"))
}

pub fn planted_signal_recovery() -> Result<String, String> {
    let cfg = HorizonConfig::default();
    let mut hits = 0;
    for trial in 0..100u64 {
        let spec = MarketSpec {
            planted: 5,
            noise_metrics: 25,
            lead: 24,
            snr: 5.0,
            ..MarketSpec::new(asset("PLT"), 0, SIX_HOURS, 500, 1_000 + trial)
        };
        let frame = generate(&spec).frame().map_err(|e| e.to_string())?;
        let names = select_valid_metrics(&frame, &cfg).map_err(|e| e.to_string())?.names();
        if (0..5).all(|j| names.contains(&format!("signal_{j:02}"))) {
            hits += 1;
        }
    }
    if hits >= 95 {
        Ok(format!("all 5 planted metrics selected in {hits}/100 trials"))
    } else {
        Err(format!("all 5 planted metrics selected in only {hits}/100 trials (need 95)"))
    }
}
