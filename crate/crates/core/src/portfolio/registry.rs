use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::cm::{load_cm, CryptoModule};
use crate::data_store::AssetId;

use super::PortfolioError;

#[derive(Debug, Clone)]
pub struct RegistryEntry {
    /// As recorded; relative paths are resolved against the registry file's
    /// directory.
    pub path: PathBuf,
    pub module: Arc<CryptoModule>,
}

/// Asset → trained module. Modules are loaded and checksum-verified when
/// they are registered and are never mutated afterwards.
#[derive(Debug, Clone, Default)]
pub struct CmRegistry {
    entries: BTreeMap<AssetId, RegistryEntry>,
}

const HEADER: &str = "symbol,quote,path";

impl CmRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads `file`; a missing file is an empty registry.
    pub fn load(file: &Path) -> Result<Self, PortfolioError> {
        let io = |message: String| PortfolioError::Io { path: file.to_path_buf(), message };
        let text = match fs::read_to_string(file) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::new()),
            Err(e) => return Err(io(e.to_string())),
        };
        let base = file.parent().unwrap_or(Path::new("."));
        let mut reg = Self::new();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        if rdr.headers().map_err(|e| io(e.to_string()))?.iter().ne(HEADER.split(',')) {
            return Err(io(format!("registry header must be `{HEADER}`")));
        }
        for rec in rdr.records() {
            let rec = rec.map_err(|e| io(e.to_string()))?;
            let (Some(symbol), Some(quote), Some(path)) = (rec.get(0), rec.get(1), rec.get(2)) else {
                return Err(io("registry row needs three fields".into()));
            };
            let asset = AssetId::with_quote(symbol, quote)?;
            let path = PathBuf::from(path);
            let module = load_cm(&base.join(&path))?;
            if module.asset != asset {
                return Err(io(format!("{} holds a module for {}, registered as {asset}", path.display(), module.asset)));
            }
            reg.insert(path, Arc::new(module))?;
        }
        Ok(reg)
    }

    pub fn save(&self, file: &Path) -> Result<(), PortfolioError> {
        let io = |e: std::io::Error| PortfolioError::Io { path: file.to_path_buf(), message: e.to_string() };
        if let Some(dir) = file.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = file.with_extension("csv.tmp");
        let mut w = fs::File::create(&tmp).map_err(io)?;
        writeln!(w, "{HEADER}").map_err(io)?;
        for (asset, e) in &self.entries {
            writeln!(w, "{},{},{}", asset.symbol(), asset.quote(), e.path.display()).map_err(io)?;
        }
        w.sync_all().map_err(io)?;
        fs::rename(&tmp, file).map_err(io)
    }

    /// Loads and registers the module at `path` (resolved against `base`).
    pub fn add(&mut self, base: &Path, path: &Path) -> Result<AssetId, PortfolioError> {
        let module = load_cm(&base.join(path))?;
        let asset = module.asset.clone();
        self.insert(path.to_path_buf(), Arc::new(module))?;
        Ok(asset)
    }

    pub fn insert(&mut self, path: PathBuf, module: Arc<CryptoModule>) -> Result<(), PortfolioError> {
        let asset = module.asset.clone();
        if self.entries.contains_key(&asset) {
            return Err(PortfolioError::Duplicate(asset));
        }
        self.entries.insert(asset, RegistryEntry { path, module });
        Ok(())
    }

    pub fn remove(&mut self, asset: &AssetId) -> Result<RegistryEntry, PortfolioError> {
        self.entries.remove(asset).ok_or_else(|| PortfolioError::NotRegistered(asset.clone()))
    }

    /// Replaces a registered module, e.g. after retraining.
    pub fn replace(&mut self, module: Arc<CryptoModule>, path: PathBuf) -> Result<(), PortfolioError> {
        let e = self.entries.get_mut(&module.asset).ok_or_else(|| PortfolioError::NotRegistered(module.asset.clone()))?;
        *e = RegistryEntry { path, module };
        Ok(())
    }

    pub fn get(&self, asset: &AssetId) -> Option<&RegistryEntry> {
        self.entries.get(asset)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AssetId, &RegistryEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
