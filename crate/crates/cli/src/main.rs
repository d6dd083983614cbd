mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;

use crlpm_core::data_store::AssetId;
use crlpm_core::pipeline::{self, RunConfig, Workspace};
use crlpm_core::portfolio::BacktestReport;
use crlpm_core::synth::{alternating, generate, MarketSpec};
use crlpm_core::time::{format_ts, parse_date};

/// Bad invocation (as opposed to a failure of the work itself); exits 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "crlpm", version, about = "Per-asset RL crypto modules, voted portfolios and fee-aware backtests")]
struct Cli {
    /// Data directory holding the store, refined features, models and registry.
    #[arg(long, global = true, env = "CRLPM_DATA_DIR", default_value = "crlpm-data")]
    data_dir: PathBuf,

    /// Flat TOML file of run settings (`key = value`, see README).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one setting; repeatable, applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest an OHLCV CSV (ts,open,high,low,close,volume) and optionally a
    /// long-format metrics CSV (ts,name,value) for one asset.
    Ingest {
        #[arg(long)]
        asset: AssetId,
        #[arg(long)]
        ohlcv: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Select metrics on the training range and write refined features.
    Refine {
        #[arg(long, required = true, value_delimiter = ',')]
        asset: Vec<AssetId>,
    },
    /// Train a crypto module per asset, save it and register it.
    TrainCm {
        #[arg(long, required = true, value_delimiter = ',')]
        asset: Vec<AssetId>,
        /// Training seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Assets trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Save the model without touching the registry.
        #[arg(long)]
        no_register: bool,
    },
    /// Inspect or edit the module registry.
    Registry {
        #[command(subcommand)]
        action: RegistryAction,
    },
    /// Backtest the registered modules of a portfolio.
    Backtest {
        /// Comma-separated assets, e.g. BTC,ETH,ADA.
        #[arg(long, required = true, value_delimiter = ',')]
        portfolio: Vec<AssetId>,
        /// First backtest day (YYYY-MM-DD).
        #[arg(long)]
        from: Option<String>,
        /// Last backtest day (YYYY-MM-DD).
        #[arg(long)]
        to: Option<String>,
        /// Fee rate per unit of turnover.
        #[arg(long)]
        fee: Option<f64>,
        /// Output stem; writes <stem>.json and <stem>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Retrain every N days with expanding training windows.
        #[arg(long)]
        retrain_days: Option<u32>,
    },
    /// Print the comparison table (or curves) of a saved backtest.
    Report {
        /// Report stem or `.json` file written by `backtest`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Print the value curves instead of the summary table.
        #[arg(long)]
        curves: bool,
    },
    /// Write synthetic OHLCV and metric CSVs for experiments.
    Synth {
        #[arg(long)]
        asset: AssetId,
        /// First bar day (YYYY-MM-DD).
        #[arg(long, default_value = "2020-10-01")]
        from: String,
        #[arg(long, default_value_t = 2_000)]
        bars: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Alternating ±5% prices with a leaked next-move metric.
        #[arg(long)]
        alternating: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum RegistryAction {
    List,
    /// Register a saved module (path relative to the data directory or absolute).
    Add { path: PathBuf },
    Remove { asset: AssetId },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors by itself
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // `crlpm report --curves | head`
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe))
}

fn run(cli: Cli) -> Result<()> {
    let ws = Workspace::new(&cli.data_dir);
    let mut cfg = config::load(cli.config.as_deref(), &cli.set)?;
    match cli.command {
        Command::Ingest { asset, ohlcv, metrics } => {
            let (bars, m) = pipeline::ingest(&ws, &asset, &ohlcv, metrics.as_deref())?;
            println!("{asset}: {bars} new bars");
            if let Some(m) = m {
                println!(
                    "{asset}: {} metrics, {} points overwritten, {} rows rejected",
                    m.counts.len(),
                    m.overwritten,
                    m.rejected.len()
                );
            }
        }
        Command::Refine { asset } => {
            log_config(&cfg);
            for a in &asset {
                let fit = pipeline::refine(&ws, a, &cfg)?;
                println!("{a}: selected {}", fit.refinery.selected.join(", "));
            }
        }
        Command::TrainCm { asset, seed, jobs, no_register } => {
            if jobs == 0 {
                bail!(Usage("--jobs must be at least 1".into()));
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            log_config(&cfg);
            train_all(&ws, &cfg, &asset, jobs, no_register)?;
        }
        Command::Registry { action } => registry(&ws, action)?,
        Command::Backtest { portfolio, from, to, fee, out, retrain_days } => {
            if let Some(f) = from {
                cfg.backtest_from = f;
            }
            if let Some(t) = to {
                cfg.backtest_to = t;
            }
            if let Some(f) = fee {
                cfg.fee_rate = f;
            }
            if let Some(d) = retrain_days {
                cfg.retrain_days = d;
            }
            cfg.validate()?;
            log_config(&cfg);
            let out = out.unwrap_or_else(|| ws.root().join("reports").join("backtest"));
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let registry = ws.registry()?;
            let report = pipeline::backtest(&ws, &registry, &portfolio, &cfg, Some(&out))?;
            for r in &report.retrains {
                match &r.error {
                    None => info!("{} retrained at {}", r.asset, format_ts(r.boundary)),
                    Some(e) => log::warn!("{} kept its module at {}: {e}", r.asset, format_ts(r.boundary)),
                }
            }
            print!("{}", report.summary.to_text());
            info!("wrote {}.json and {}.csv", out.display(), out.display());
        }
        Command::Report { input, format, curves } => {
            let path = if input.extension().is_some_and(|e| e == "json") { input } else { input.with_extension("json") };
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let report = BacktestReport::from_json(&text)?;
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            match (curves, format) {
                (true, _) => report.curves().write_csv(&mut out)?,
                (false, Format::Text) => out.write_all(report.summary.to_text().as_bytes())?,
                (false, Format::Csv) => out.write_all(report.summary.to_csv().as_bytes())?,
            }
        }
        Command::Synth { asset, from, bars, seed, alternating: alt, out } => {
            let start = parse_date(&from).map_err(|e| Usage(e.to_string()))?;
            let market = if alt {
                alternating(asset.clone(), start, cfg.interval, bars, seed)
            } else {
                generate(&MarketSpec::new(asset.clone(), start, cfg.interval, bars, seed))
            };
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let ohlcv = out.join(format!("{}_ohlcv.csv", asset.symbol()));
            let metrics = out.join(format!("{}_metrics.csv", asset.symbol()));
            market.write_ohlcv_csv(create(&ohlcv)?)?;
            market.write_metrics_csv(create(&metrics)?)?;
            println!("{}\n{}", ohlcv.display(), metrics.display());
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn log_config(cfg: &RunConfig) {
    info!("seed {}", cfg.seed);
    info!("effective configuration:\n{}", config::render(cfg));
}

fn train_all(ws: &Workspace, cfg: &RunConfig, assets: &[AssetId], jobs: usize, no_register: bool) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    // each job reads its own store files and writes its own model file
    let results: Vec<_> = pool.install(|| assets.par_iter().map(|a| (a, pipeline::train(ws, a, cfg))).collect());

    let mut registry = if no_register { None } else { Some(ws.registry()?) };
    let mut failed = 0;
    for (asset, result) in results {
        match result {
            Ok((training, rel)) => {
                println!(
                    "{asset}: {} (validation log wealth {:.6}, {} metrics)",
                    rel.display(),
                    training.validation_log_wealth,
                    training.module.refinery.selected.len()
                );
                if let Some(reg) = registry.as_mut() {
                    if reg.get(asset).is_some() {
                        reg.remove(asset)?;
                    }
                    reg.add(ws.root(), &rel)?;
                }
            }
            Err(e) => {
                failed += 1;
                eprintln!("error: {asset}: {e}");
            }
        }
    }
    if let Some(reg) = &registry {
        ws.save_registry(reg)?;
    }
    if failed > 0 {
        bail!("{failed} of {} module(s) failed to train", assets.len());
    }
    Ok(())
}

fn registry(ws: &Workspace, action: RegistryAction) -> Result<()> {
    let mut reg = ws.registry()?;
    match action {
        RegistryAction::List => {
            println!("asset\tpath\ttrain\tvalidation\twindow\tmetrics\tsignals");
            for (asset, e) in reg.iter() {
                let m = &e.module;
                println!(
                    "{asset}\t{}\t{}..{}\t{}..{}\t{}\t{}\t{}",
                    e.path.display(),
                    format_ts(m.train_range.start),
                    format_ts(m.train_range.end),
                    format_ts(m.validation_range.start),
                    format_ts(m.validation_range.end),
                    m.window,
                    m.refinery.selected.len(),
                    if m.eam.is_some() { "yes" } else { "no" }
                );
            }
        }
        RegistryAction::Add { path } => {
            let asset = reg.add(ws.root(), &path)?;
            ws.save_registry(&reg)?;
            println!("registered {asset}");
        }
        RegistryAction::Remove { asset } => {
            reg.remove(&asset)?;
            ws.save_registry(&reg)?;
            println!("removed {asset}");
        }
    }
    Ok(())
}
