//! End-to-end workflow over a data directory:
//!
//! ```text
//! <root>/store/          ingested bars and metrics (see FileStore)
//! <root>/refined/<KEY>/  correlation table, selected metrics, features
//! <root>/models/<KEY>.crlm
//! <root>/registry.csv    symbol,quote,path (paths relative to <root>)
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cm::{save_cm, train_cm, CmConfig, CmError, CmTraining, RewardConfig};
use crate::data_store::{AlignedFrame, AssetId, FileStore, MetricIngest, StoreError, DEFAULT_FILL_LIMIT};
use crate::portfolio::{run_backtest, BacktestConfig, BacktestReport, CmRegistry, PortfolioError, RetrainPlan};
use crate::refinery::{HorizonConfig, Pairing, Refinery, RefineryConfig, RefineryError, RefineryFit};
use crate::rl::TrainConfig;
use crate::time::{DataSplit, TimeError, TimeRange, DEFAULT_BAR_INTERVAL};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Refinery(#[from] RefineryError),
    #[error(transparent)]
    Cm(#[from] CmError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error(transparent)]
    Time(#[from] TimeError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Every tunable of a run, as flat keys. Dates are `YYYY-MM-DD`, inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub interval: i64,
    pub fill_limit: usize,
    pub train_from: String,
    pub train_to: String,
    pub validation_from: String,
    pub validation_to: String,
    pub backtest_from: String,
    pub backtest_to: String,
    pub horizons: [usize; 3],
    pub top_per_group: usize,
    pub final_count: usize,
    pub pairing: Pairing,
    pub norm_window: usize,
    pub pca_window: usize,
    pub variance_target: f64,
    pub window: usize,
    pub use_eam: bool,
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub target_sync: usize,
    pub buffer_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: usize,
    pub max_steps: usize,
    pub grad_clip: f64,
    pub eval_every: usize,
    pub seed: u64,
    pub fee_rate: f64,
    pub eam_hold_reward: f64,
    pub initial_capital: f64,
    pub rebalance_every: usize,
    /// Retraining cadence in days; 0 disables retraining.
    pub retrain_days: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let refinery = RefineryConfig::default();
        let dqn = TrainConfig::default();
        let cm = CmConfig::default();
        let reward = RewardConfig::default();
        Self {
            interval: DEFAULT_BAR_INTERVAL,
            fill_limit: DEFAULT_FILL_LIMIT,
            train_from: "2020-10-01".into(),
            train_to: "2021-12-31".into(),
            validation_from: "2022-01-01".into(),
            validation_to: "2022-02-28".into(),
            backtest_from: "2022-03-01".into(),
            backtest_to: "2022-09-30".into(),
            horizons: refinery.horizons.horizons,
            top_per_group: refinery.horizons.top_per_group,
            final_count: refinery.horizons.final_count,
            pairing: refinery.horizons.pairing,
            norm_window: refinery.norm_window,
            pca_window: refinery.pca_window,
            variance_target: refinery.variance_target,
            window: cm.window,
            use_eam: cm.use_eam,
            gamma: dqn.gamma,
            lr: dqn.lr,
            batch: dqn.batch,
            target_sync: dqn.target_sync,
            buffer_capacity: dqn.buffer_capacity,
            eps_start: dqn.eps_start,
            eps_end: dqn.eps_end,
            eps_decay_steps: dqn.eps_decay_steps,
            max_steps: dqn.max_steps,
            grad_clip: dqn.grad_clip,
            eval_every: cm.eval_every,
            seed: dqn.seed,
            fee_rate: reward.fee_rate,
            eam_hold_reward: reward.eam_hold_reward,
            initial_capital: 10_000.0,
            rebalance_every: 1,
            retrain_days: 0,
        }
    }
}

impl RunConfig {
    pub fn split(&self) -> Result<DataSplit, PipelineError> {
        let split = DataSplit {
            train: TimeRange::from_dates(&self.train_from, &self.train_to)?,
            validation: TimeRange::from_dates(&self.validation_from, &self.validation_to)?,
            backtest: TimeRange::from_dates(&self.backtest_from, &self.backtest_to)?,
        };
        if !(split.train.end < split.validation.start && split.validation.end < split.backtest.start) {
            return Err(PipelineError::Config("train, validation and backtest ranges must be ordered and disjoint".into()));
        }
        Ok(split)
    }

    pub fn refinery(&self) -> RefineryConfig {
        RefineryConfig {
            horizons: HorizonConfig {
                horizons: self.horizons,
                top_per_group: self.top_per_group,
                final_count: self.final_count,
                pairing: self.pairing,
            },
            norm_window: self.norm_window,
            pca_window: self.pca_window,
            variance_target: self.variance_target,
            ..RefineryConfig::default()
        }
    }

    pub fn cm(&self) -> CmConfig {
        CmConfig {
            window: self.window,
            refinery: self.refinery(),
            reward: RewardConfig { fee_rate: self.fee_rate, eam_hold_reward: self.eam_hold_reward },
            dqn: TrainConfig {
                gamma: self.gamma,
                lr: self.lr,
                batch: self.batch,
                target_sync: self.target_sync,
                buffer_capacity: self.buffer_capacity,
                eps_start: self.eps_start,
                eps_end: self.eps_end,
                eps_decay_steps: self.eps_decay_steps,
                max_steps: self.max_steps,
                grad_clip: self.grad_clip,
                seed: self.seed,
            },
            use_eam: self.use_eam,
            eval_every: self.eval_every,
        }
    }

    pub fn backtest(&self, assets: Vec<AssetId>) -> Result<BacktestConfig, PipelineError> {
        Ok(BacktestConfig {
            assets,
            range: self.split()?.backtest,
            initial_capital: self.initial_capital,
            fee_rate: self.fee_rate,
            rebalance_every: self.rebalance_every,
        })
    }

    pub fn retrain_plan(&self) -> Option<RetrainPlan> {
        (self.retrain_days > 0).then(|| RetrainPlan { every_days: self.retrain_days, config: self.cm() })
    }

    /// Checks every parameter against its domain.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.interval <= 0 {
            return Err(PipelineError::Config(format!("interval {} must be positive", self.interval)));
        }
        self.split()?;
        self.cm().validate()?;
        self.backtest(vec![AssetId::new("X")?])?.validate()?;
        Ok(())
    }
}

/// Paths of a data directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn store(&self) -> Result<FileStore, PipelineError> {
        Ok(FileStore::open(self.root.join("store"))?)
    }

    pub fn registry_path(&self) -> PathBuf {
        self.root.join("registry.csv")
    }

    /// Model path relative to the root.
    pub fn model_rel(&self, asset: &AssetId) -> PathBuf {
        PathBuf::from("models").join(format!("{}.crlm", asset.key()))
    }

    pub fn refined_dir(&self, asset: &AssetId) -> PathBuf {
        self.root.join("refined").join(asset.key())
    }

    pub fn registry(&self) -> Result<CmRegistry, PipelineError> {
        Ok(CmRegistry::load(&self.registry_path())?)
    }

    pub fn save_registry(&self, reg: &CmRegistry) -> Result<(), PipelineError> {
        Ok(reg.save(&self.registry_path())?)
    }

    pub fn frame(&self, asset: &AssetId, cfg: &RunConfig) -> Result<AlignedFrame, PipelineError> {
        let (frame, report) = self.store()?.align_all(asset, cfg.interval, cfg.fill_limit)?;
        for d in &report.dropped {
            log::warn!("{asset}: metric `{}` dropped during alignment ({:?})", d.name, d.reason);
        }
        Ok(frame)
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Ingests an OHLCV file and optionally a metrics file.
pub fn ingest(
    ws: &Workspace,
    asset: &AssetId,
    ohlcv: &Path,
    metrics: Option<&Path>,
) -> Result<(usize, Option<MetricIngest>), PipelineError> {
    let store = ws.store()?;
    let bars = store.ingest_ohlcv(asset, File::open(ohlcv).map_err(io_err(ohlcv))?)?;
    let m = match metrics {
        Some(p) => Some(store.ingest_metrics(asset, File::open(p).map_err(io_err(p))?)?),
        None => None,
    };
    Ok((bars, m))
}

/// Fits the refinery on the training range and writes its outputs.
pub fn refine(ws: &Workspace, asset: &AssetId, cfg: &RunConfig) -> Result<RefineryFit, PipelineError> {
    let split = cfg.split()?;
    let frame = ws.frame(asset, cfg)?.truncated(split.validation.end);
    let fit = Refinery::fit(&frame, &cfg.refinery(), split.train.end)?;
    let refined = fit.refinery.transform(&frame)?;
    let dir = ws.refined_dir(asset);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let write = |name: &str, f: &dyn Fn(BufWriter<File>) -> std::io::Result<()>| {
        let p = dir.join(name);
        f(BufWriter::new(File::create(&p).map_err(io_err(&p))?)).map_err(io_err(&p))
    };
    write("correlations.csv", &|w| fit.table.write_csv(w))?;
    write("selected.csv", &|w| fit.selection.write_csv(w))?;
    write("features.csv", &|w| refined.write_csv(w))?;
    Ok(fit)
}

/// Trains and saves a module; returns the training result and the model path
/// relative to the workspace root.
pub fn train(ws: &Workspace, asset: &AssetId, cfg: &RunConfig) -> Result<(CmTraining, PathBuf), PipelineError> {
    let split = cfg.split()?;
    let frame = ws.frame(asset, cfg)?;
    let training = train_cm(&frame, split.train, split.validation, &cfg.cm())?;
    let rel = ws.model_rel(asset);
    save_cm(&training.module, &ws.root.join(&rel))?;
    Ok((training, rel))
}

/// Backtests registered modules for `assets` and writes `<out>.json` and
/// `<out>.csv`.
pub fn backtest(
    ws: &Workspace,
    registry: &CmRegistry,
    assets: &[AssetId],
    cfg: &RunConfig,
    out: Option<&Path>,
) -> Result<BacktestReport, PipelineError> {
    for a in assets {
        if registry.get(a).is_none() {
            return Err(PortfolioError::MissingCm(a.clone()).into());
        }
    }
    let mut frames = BTreeMap::new();
    for a in assets {
        frames.insert(a.clone(), ws.frame(a, cfg)?);
    }
    let bt = cfg.backtest(assets.to_vec())?;
    let report = run_backtest(registry, &frames, &bt, cfg.retrain_plan().as_ref())?;
    if let Some(out) = out {
        report.write(out)?;
    }
    Ok(report)
}
