//! Crypto module files: a `CRLM` container of kind 2 whose payload is
//!
//! ```text
//! str   header: JSON object {asset, interval, train_range, validation_range,
//!       window, refinery, reward}
//! u8    1 if a signal agent follows the allocation agent, else 0
//! net   allocation agent (same encoding as a standalone network payload)
//! net   signal agent, when present
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{self, CodecError, PayloadKind, Reader, Writer};
use crate::data_store::AssetId;
use crate::refinery::Refinery;
use crate::rl::QNetwork;
use crate::time::TimeRange;

use super::reward::RewardConfig;
use super::{CmError, CryptoModule};

#[derive(Serialize, Deserialize)]
struct Header {
    asset: AssetId,
    interval: i64,
    train_range: TimeRange,
    validation_range: TimeRange,
    window: usize,
    refinery: Refinery,
    reward: RewardConfig,
}

impl CryptoModule {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            asset: self.asset.clone(),
            interval: self.interval,
            train_range: self.train_range,
            validation_range: self.validation_range,
            window: self.window,
            refinery: self.refinery.clone(),
            reward: self.reward.clone(),
        };
        let mut w = Writer::new();
        w.str(&serde_json::to_string(&header).expect("header serializes"));
        w.u8(u8::from(self.eam.is_some()));
        self.sam.encode_into(&mut w);
        if let Some(eam) = &self.eam {
            eam.encode_into(&mut w);
        }
        codec::seal(PayloadKind::CryptoModule, &w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CmError> {
        let payload = codec::open(bytes, PayloadKind::CryptoModule)?;
        let mut r = Reader::new(payload);
        let header: Header = serde_json::from_str(&r.str()?)
            .map_err(|e| CodecError::Malformed(format!("module header: {e}")))?;
        let has_eam = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(CodecError::Malformed(format!("signal-agent flag {b}")).into()),
        };
        let sam = QNetwork::decode_from(&mut r)?;
        let eam = if has_eam { Some(QNetwork::decode_from(&mut r)?) } else { None };
        r.finish()?;
        let c_max = header.refinery.c_max();
        let expected_f = 5 + c_max + usize::from(has_eam);
        if sam.input_dims() != (expected_f, 2, header.window) {
            return Err(CodecError::Malformed(format!(
                "allocation network input {:?} does not match window {} and {} features",
                sam.input_dims(),
                header.window,
                expected_f
            ))
            .into());
        }
        Ok(Self {
            asset: header.asset,
            interval: header.interval,
            train_range: header.train_range,
            validation_range: header.validation_range,
            window: header.window,
            refinery: header.refinery,
            reward: header.reward,
            sam,
            eam,
        })
    }
}

/// Writes atomically: a temporary sibling file is renamed into place.
pub fn save_cm(cm: &CryptoModule, path: &Path) -> Result<(), CmError> {
    let io = |source| CmError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("crlm.tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&cm.to_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_cm(path: &Path) -> Result<CryptoModule, CmError> {
    let bytes = fs::read(path).map_err(|source| CmError::Io { path: path.to_path_buf(), source })?;
    CryptoModule::from_bytes(&bytes)
}
