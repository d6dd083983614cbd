use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::{info, warn};

use super::parse::{parse_metrics, parse_ohlcv};
use super::{
    align_series, AlignReport, AlignedFrame, AssetId, Bar, IssueKind, RowIssue, StoreError,
};
use crate::time::TimeRange;

const MANIFEST: &str = "manifest.csv";
const OHLCV_FILE: &str = "ohlcv.csv";
const METRICS_FILE: &str = "metrics.csv";

// Per-asset files have a single writer each; the shared manifest does not.
static MANIFEST_LOCK: Mutex<()> = Mutex::new(());

/// Outcome of a metrics ingestion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricIngest {
    /// Distinct timestamps accepted from the source, per metric name.
    pub counts: BTreeMap<String, usize>,
    /// Rows rejected for non-finite values.
    pub rejected: Vec<RowIssue>,
    /// Points that replaced an earlier value at the same (name, ts).
    pub overwritten: usize,
}

pub type MetricSeries = BTreeMap<String, Vec<(i64, f64)>>;

/// Directory-backed store of per-asset CSV files.
#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    {
        let file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(io_err(&tmp))?;
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn asset_dir(&self, asset: &AssetId) -> PathBuf {
        self.root.join(asset.key())
    }

    /// Parses and persists bars. Returns the number of bars that were not
    /// already stored; re-ingesting identical bars is a no-op, while a
    /// different bar at an already-stored timestamp is rejected.
    pub fn ingest_ohlcv<R: Read>(&self, asset: &AssetId, source: R) -> Result<usize, StoreError> {
        let incoming = parse_ohlcv(source)?;
        let mut merged: BTreeMap<i64, Bar> =
            self.load_bars_opt(asset)?.unwrap_or_default().into_iter().map(|b| (b.ts, b)).collect();

        let mut added = 0;
        let mut conflicts = Vec::new();
        for (i, bar) in incoming.iter().enumerate() {
            match merged.get(&bar.ts) {
                Some(existing) if existing == bar => {}
                Some(_) => conflicts.push(RowIssue {
                    row: i + 1,
                    kind: IssueKind::Conflict,
                    message: format!("ts {} already stored with different values", bar.ts),
                }),
                None => {
                    merged.insert(bar.ts, *bar);
                    added += 1;
                }
            }
        }
        if !conflicts.is_empty() {
            return Err(StoreError::RejectedRows(conflicts));
        }
        if added > 0 {
            self.write_bars(asset, merged.values())?;
            self.update_manifest()?;
        }
        info!("ingested {added} new bar(s) for {asset}");
        Ok(added)
    }

    /// Parses and persists metric points. A later value at the same
    /// (name, ts) replaces the earlier one, whether it came from the store
    /// or from earlier in the same source.
    pub fn ingest_metrics<R: Read>(&self, asset: &AssetId, source: R) -> Result<MetricIngest, StoreError> {
        let parsed = parse_metrics(source)?;
        for r in &parsed.rejected {
            warn!("{asset}: metrics {r}");
        }
        let mut stored: BTreeMap<String, BTreeMap<i64, f64>> = self
            .load_metrics_opt(asset)?
            .unwrap_or_default()
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect();

        let mut seen: BTreeMap<String, std::collections::BTreeSet<i64>> = BTreeMap::new();
        let mut overwritten = 0;
        for p in parsed.points {
            if let Some(old) = stored.entry(p.name.clone()).or_default().insert(p.ts, p.value) {
                overwritten += 1;
                warn!("{asset}: metric `{}` at ts {} overwritten ({} -> {})", p.name, p.ts, old, p.value);
            }
            seen.entry(p.name).or_default().insert(p.ts);
        }
        self.write_metrics(asset, &stored)?;
        self.update_manifest()?;
        Ok(MetricIngest {
            counts: seen.into_iter().map(|(k, v)| (k, v.len())).collect(),
            rejected: parsed.rejected,
            overwritten,
        })
    }

    pub fn load_bars(&self, asset: &AssetId) -> Result<Vec<Bar>, StoreError> {
        self.load_bars_opt(asset)?.ok_or_else(|| StoreError::UnknownAsset(asset.clone()))
    }

    pub fn load_metrics(&self, asset: &AssetId) -> Result<MetricSeries, StoreError> {
        Ok(self.load_metrics_opt(asset)?.unwrap_or_default())
    }

    fn load_bars_opt(&self, asset: &AssetId) -> Result<Option<Vec<Bar>>, StoreError> {
        let path = self.asset_dir(asset).join(OHLCV_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let file = fs::File::open(&path).map_err(io_err(&path))?;
        parse_ohlcv(file)
            .map(Some)
            .map_err(|e| StoreError::Corrupt { path, message: e.to_string() })
    }

    fn load_metrics_opt(&self, asset: &AssetId) -> Result<Option<MetricSeries>, StoreError> {
        let path = self.asset_dir(asset).join(METRICS_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let file = fs::File::open(&path).map_err(io_err(&path))?;
        let parsed = parse_metrics(file)
            .map_err(|e| StoreError::Corrupt { path: path.clone(), message: e.to_string() })?;
        let mut out: BTreeMap<String, BTreeMap<i64, f64>> = BTreeMap::new();
        for p in parsed.points {
            out.entry(p.name).or_default().insert(p.ts, p.value);
        }
        Ok(Some(out.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect()))
    }

    fn write_bars<'a>(&self, asset: &AssetId, bars: impl Iterator<Item = &'a Bar>) -> Result<(), StoreError> {
        let dir = self.asset_dir(asset);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_atomic(&dir.join(OHLCV_FILE), |w| {
            writeln!(w, "ts,open,high,low,close,volume")?;
            for b in bars {
                writeln!(w, "{},{},{},{},{},{}", b.ts, b.open, b.high, b.low, b.close, b.volume)?;
            }
            Ok(())
        })
    }

    fn write_metrics(&self, asset: &AssetId, series: &BTreeMap<String, BTreeMap<i64, f64>>) -> Result<(), StoreError> {
        let dir = self.asset_dir(asset);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_atomic(&dir.join(METRICS_FILE), |w| {
            writeln!(w, "ts,name,value")?;
            for (name, points) in series {
                for (ts, v) in points {
                    writeln!(w, "{ts},{name},{v}")?;
                }
            }
            Ok(())
        })
    }

    /// Assets that have at least one stored file, sorted.
    pub fn assets(&self) -> Result<Vec<AssetId>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            if !entry.path().is_dir() {
                continue;
            }
            if let Ok(asset) = entry.file_name().to_string_lossy().parse::<AssetId>() {
                if self.asset_dir(&asset) == entry.path() {
                    out.push(asset);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    fn update_manifest(&self) -> Result<(), StoreError> {
        let _guard = MANIFEST_LOCK.lock().unwrap_or_else(|p| p.into_inner());
        let mut rows = Vec::new();
        for asset in self.assets()? {
            let bars = self.load_bars_opt(&asset)?.map_or(0, |b| b.len());
            let metrics = self.load_metrics_opt(&asset)?.unwrap_or_default();
            let points: usize = metrics.values().map(Vec::len).sum();
            rows.push((asset, bars, metrics.len(), points));
        }
        write_atomic(&self.root.join(MANIFEST), |w| {
            writeln!(w, "symbol,quote,bars,metric_names,metric_points")?;
            for (a, bars, names, points) in &rows {
                writeln!(w, "{},{},{bars},{names},{points}", a.symbol(), a.quote())?;
            }
            Ok(())
        })
    }

    pub fn align(
        &self,
        asset: &AssetId,
        range: TimeRange,
        interval: i64,
        fill_limit: usize,
    ) -> Result<(AlignedFrame, AlignReport), StoreError> {
        let bars = self.load_bars(asset)?;
        let metrics = self.load_metrics(asset)?;
        align_series(asset, &bars, &metrics, range, interval, fill_limit)
    }

    /// Aligns over every stored bar.
    pub fn align_all(
        &self,
        asset: &AssetId,
        interval: i64,
        fill_limit: usize,
    ) -> Result<(AlignedFrame, AlignReport), StoreError> {
        let bars = self.load_bars(asset)?;
        let (first, last) = match (bars.first(), bars.last()) {
            (Some(f), Some(l)) => (f.ts, l.ts),
            _ => return Err(StoreError::UnknownAsset(asset.clone())),
        };
        let metrics = self.load_metrics(asset)?;
        align_series(asset, &bars, &metrics, TimeRange { start: first, end: last }, interval, fill_limit)
    }
}
