use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crlpm_core::pipeline::{backtest, ingest, refine, train, RunConfig, Workspace};
use crlpm_core::synth::{generate, MarketSpec};

use crate::support::{asset, JAN_2021, SIX_HOURS};

/// 2021-01-01 through 2021-08-31 at six-hour bars.
const BARS: usize = 243 * 4;

fn config() -> RunConfig {
    RunConfig {
        train_from: "2021-01-01".into(),
        train_to: "2021-06-30".into(),
        validation_from: "2021-07-01".into(),
        validation_to: "2021-07-31".into(),
        backtest_from: "2021-08-01".into(),
        backtest_to: "2021-08-31".into(),
        norm_window: 20,
        pca_window: 40,
        window: 8,
        max_steps: 1_000,
        eps_decay_steps: 600,
        buffer_capacity: 2_000,
        eval_every: 250,
        seed: 17,
        ..RunConfig::default()
    }
}

/// One complete run in a fresh data directory; returns every artefact it
/// wrote, as (path relative to the root, bytes).
fn run(sources: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ws = Workspace::new(tmp.path());
    let cfg = config();
    let syms = ["DTA", "DTB"];
    let assets: Vec<_> = syms.iter().map(|s| asset(s)).collect();
    let mut registry = ws.registry().map_err(|e| e.to_string())?;
    for (sym, id) in syms.iter().zip(&assets) {
        let ohlcv = sources.join(format!("{sym}_ohlcv.csv"));
        let metrics = sources.join(format!("{sym}_metrics.csv"));
        ingest(&ws, id, &ohlcv, Some(&metrics)).map_err(|e| e.to_string())?;
        refine(&ws, id, &cfg).map_err(|e| e.to_string())?;
        let (_, rel) = train(&ws, id, &cfg).map_err(|e| e.to_string())?;
        registry.add(ws.root(), &rel).map_err(|e| e.to_string())?;
    }
    ws.save_registry(&registry).map_err(|e| e.to_string())?;
    let report = backtest(&ws, &registry, &assets, &cfg, Some(&tmp.path().join("report"))).map_err(|e| e.to_string())?;
    fs::write(tmp.path().join("summary.txt"), report.summary.to_text()).map_err(|e| e.to_string())?;
    fs::write(tmp.path().join("summary.csv"), report.summary.to_csv()).map_err(|e| e.to_string())?;

    let mut files = Vec::new();
    collect(tmp.path(), tmp.path(), &mut files).map_err(|e| e.to_string())?;
    files.sort();
    Ok(files)
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else {
            out.push((path.strip_prefix(root).expect("under root").to_path_buf(), fs::read(&path)?));
        }
    }
    Ok(())
}

pub fn two_identical_runs() -> Result<String, String> {
    let sources = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (i, sym) in ["DTA", "DTB"].iter().enumerate() {
        let market = generate(&MarketSpec::new(asset(sym), JAN_2021, SIX_HOURS, BARS, 300 + i as u64));
        let open = |name: String| File::create(sources.path().join(name)).map(BufWriter::new);
        market.write_ohlcv_csv(open(format!("{sym}_ohlcv.csv")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        market.write_metrics_csv(open(format!("{sym}_metrics.csv")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    }
    let first = run(sources.path())?;
    let second = run(sources.path())?;
    if first.len() != second.len() {
        return Err(format!("{} files in the first run, {} in the second", first.len(), second.len()));
    }
    for ((pa, a), (pb, b)) in first.iter().zip(&second) {
        if pa != pb {
            return Err(format!("file sets differ: {} vs {}", pa.display(), pb.display()));
        }
        if a != b {
            return Err(format!("{} differs between runs", pa.display()));
        }
    }
    for needed in ["report.json", "report.csv", "registry.csv", "correlations.csv", "features.csv"] {
        if !first.iter().any(|(p, _)| p.ends_with(needed)) {
            return Err(format!("run did not produce {needed}"));
        }
    }
    if first.iter().filter(|(p, _)| p.extension().is_some_and(|e| e == "crlm")).count() != 2 {
        return Err("run did not produce both model files".into());
    }
    Ok(format!("{} artefacts byte-identical across two runs", first.len()))
}
