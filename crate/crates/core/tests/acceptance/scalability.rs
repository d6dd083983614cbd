use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crlpm_core::cm::{save_cm, train_cm, AllocationAction};
use crlpm_core::data_store::{AlignedFrame, AssetId};
use crlpm_core::portfolio::{run_backtest, BacktestConfig, BacktestReport, CmRegistry};
use crlpm_core::synth::{generate, MarketSpec};
use crlpm_core::time::TimeRange;

use crate::support::{asset, small_cm_config, SIX_HOURS};

const BARS: usize = 600;

fn span(a: usize, b: usize) -> Result<TimeRange, String> {
    TimeRange::new(a as i64 * SIX_HOURS, b as i64 * SIX_HOURS).map_err(|e| e.to_string())
}

fn train_and_save(dir: &Path, sym: &str, seed: u64) -> Result<(AssetId, AlignedFrame), String> {
    let id = asset(sym);
    let frame = generate(&MarketSpec::new(id.clone(), 0, SIX_HOURS, BARS, seed)).frame().map_err(|e| e.to_string())?;
    let trained = train_cm(&frame, span(0, 349)?, span(350, 449)?, &small_cm_config(seed)).map_err(|e| e.to_string())?;
    save_cm(&trained.module, &dir.join(format!("models/{sym}.crlm"))).map_err(|e| e.to_string())?;
    Ok((id, frame))
}

fn backtest(
    registry_file: &Path,
    frames: &BTreeMap<AssetId, AlignedFrame>,
    members: &[&AssetId],
) -> Result<BacktestReport, String> {
    // reload from disk each time, as a separate process would
    let registry = CmRegistry::load(registry_file).map_err(|e| e.to_string())?;
    let cfg = BacktestConfig::new(members.iter().map(|a| (*a).clone()).collect(), span(450, BARS - 1)?);
    run_backtest(&registry, frames, &cfg, None).map_err(|e| e.to_string())
}

fn same_actions(asset: &AssetId, runs: &[(&str, &BacktestReport)]) -> Result<usize, String> {
    let logs: Vec<HashMap<i64, AllocationAction>> =
        runs.iter().map(|(_, r)| r.actions_for(asset).into_iter().collect()).collect();
    let mut shared = 0;
    for (ts, action) in &logs[0] {
        for (i, log) in logs.iter().enumerate().skip(1) {
            match log.get(ts) {
                Some(other) if other == action => {}
                Some(other) => {
                    return Err(format!(
                        "{asset} at {ts}: {action:?} in {} but {other:?} in {}",
                        runs[0].0, runs[i].0
                    ))
                }
                None => return Err(format!("{asset} at {ts}: missing from {}", runs[i].0)),
            }
        }
        shared += 1;
    }
    Ok(shared)
}

pub fn plug_and_unplug() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let registry_file = root.join("registry.csv");

    let mut frames = BTreeMap::new();
    for (sym, seed) in [("AAA", 91), ("BBB", 92), ("CCC", 93)] {
        let (id, frame) = train_and_save(root, sym, seed)?;
        frames.insert(id, frame);
    }
    let (a, b, c) = (asset("AAA"), asset("BBB"), asset("CCC"));
    let model_a = std::fs::read(root.join("models/AAA.crlm")).map_err(|e| e.to_string())?;
    let model_b = std::fs::read(root.join("models/BBB.crlm")).map_err(|e| e.to_string())?;

    let edit = |f: &dyn Fn(&mut CmRegistry) -> Result<(), String>| -> Result<(), String> {
        let mut reg = CmRegistry::load(&registry_file).map_err(|e| e.to_string())?;
        f(&mut reg)?;
        reg.save(&registry_file).map_err(|e| e.to_string())
    };
    let add = |sym: &'static str| {
        move |reg: &mut CmRegistry| {
            reg.add(root, Path::new(&format!("models/{sym}.crlm"))).map(|_| ()).map_err(|e| e.to_string())
        }
    };

    edit(&add("AAA"))?;
    edit(&add("BBB"))?;
    let ab = backtest(&registry_file, &frames, &[&a, &b])?;
    edit(&add("CCC"))?;
    let abc = backtest(&registry_file, &frames, &[&a, &b, &c])?;
    edit(&|reg| reg.remove(&b).map(|_| ()).map_err(|e| e.to_string()))?;
    let ac = backtest(&registry_file, &frames, &[&a, &c])?;

    // plugging c in must not have touched a's or b's trained models
    if std::fs::read(root.join("models/AAA.crlm")).map_err(|e| e.to_string())? != model_a
        || std::fs::read(root.join("models/BBB.crlm")).map_err(|e| e.to_string())? != model_b
    {
        return Err("existing model files changed when adding a module".into());
    }
    let shared_a = same_actions(&a, &[("{a,b}", &ab), ("{a,b,c}", &abc), ("{a,c}", &ac)])?;
    let shared_c = same_actions(&c, &[("{a,b,c}", &abc), ("{a,c}", &ac)])?;
    Ok(format!("three reports; a identical at {shared_a} timestamps, c at {shared_c}"))
}
