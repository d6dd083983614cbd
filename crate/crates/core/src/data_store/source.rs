use super::{AssetId, Bar, FileStore, MetricPoint, StoreError};
use crate::time::TimeRange;

/// Pulls bars and metrics for one asset over a time range.
pub trait DataSource {
    fn fetch_bars(&self, asset: &AssetId, range: TimeRange) -> Result<Vec<Bar>, StoreError>;
    fn fetch_metrics(&self, asset: &AssetId, range: TimeRange) -> Result<Vec<MetricPoint>, StoreError>;
}

impl DataSource for FileStore {
    fn fetch_bars(&self, asset: &AssetId, range: TimeRange) -> Result<Vec<Bar>, StoreError> {
        Ok(self.load_bars(asset)?.into_iter().filter(|b| range.contains(b.ts)).collect())
    }

    fn fetch_metrics(&self, asset: &AssetId, range: TimeRange) -> Result<Vec<MetricPoint>, StoreError> {
        let mut out = Vec::new();
        for (name, series) in self.load_metrics(asset)? {
            out.extend(
                series
                    .into_iter()
                    .filter(|(ts, _)| range.contains(*ts))
                    .map(|(ts, value)| MetricPoint { ts, name: name.clone(), value }),
            );
        }
        out.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.name.cmp(&b.name)));
        Ok(out)
    }
}

/// Exchange REST endpoint for candles. Not shipped: every call fails with
/// [`StoreError::Unsupported`].
#[derive(Debug, Clone)]
pub struct ExchangeApiSource {
    pub base_url: String,
}

/// On-chain metrics API endpoint. Not shipped.
#[derive(Debug, Clone)]
pub struct OnChainApiSource {
    pub base_url: String,
}

impl DataSource for ExchangeApiSource {
    fn fetch_bars(&self, _: &AssetId, _: TimeRange) -> Result<Vec<Bar>, StoreError> {
        Err(StoreError::Unsupported("exchange API"))
    }

    fn fetch_metrics(&self, _: &AssetId, _: TimeRange) -> Result<Vec<MetricPoint>, StoreError> {
        Err(StoreError::Unsupported("exchange API"))
    }
}

impl DataSource for OnChainApiSource {
    fn fetch_bars(&self, _: &AssetId, _: TimeRange) -> Result<Vec<Bar>, StoreError> {
        Err(StoreError::Unsupported("on-chain metrics API"))
    }

    fn fetch_metrics(&self, _: &AssetId, _: TimeRange) -> Result<Vec<MetricPoint>, StoreError> {
        Err(StoreError::Unsupported("on-chain metrics API"))
    }
}
