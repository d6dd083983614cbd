//! The `CRLM` binary container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CRLM"
//! 4       2     format version (u16 LE)
//! 6       1     payload kind (1 = Q-network, 2 = crypto module)
//! 7       8     payload length in bytes (u64 LE)
//! 15      len   payload
//! 15+len  32    SHA-256 of bytes [0, 15+len)
//! ```
//!
//! Payload integers are little-endian, reals are IEEE-754 f64 LE, strings
//! are a u32 LE byte length followed by UTF-8.

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"CRLM";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 15;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    Network = 1,
    CryptoModule = 2,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("not a CRLM file (bad magic)")]
    BadMagic,
    #[error("file truncated")]
    Truncated,
    #[error("checksum mismatch: file is corrupted")]
    Checksum,
    #[error("unsupported CRLM format version {found} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: u16 },
    #[error("unexpected payload kind {found}, expected {expected}")]
    WrongKind { found: u8, expected: u8 },
    #[error("malformed payload: {0}")]
    Malformed(String),
}

/// Wraps a payload in the container.
pub fn seal(kind: PayloadKind, payload: &[u8]) -> Vec<u8> {
    seal_with_version(kind, payload, FORMAT_VERSION)
}

#[doc(hidden)]
pub fn seal_with_version(kind: PayloadKind, payload: &[u8], version: u16) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CHECKSUM_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    out.push(kind as u8);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Validates magic, checksum, version and kind, and returns the payload.
pub fn open(bytes: &[u8], expected: PayloadKind) -> Result<&[u8], CodecError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CodecError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(CodecError::Truncated);
    }
    let body_end = bytes.len() - CHECKSUM_LEN;
    let digest = Sha256::digest(&bytes[..body_end]);
    if digest.as_slice() != &bytes[body_end..] {
        return Err(CodecError::Checksum);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion { found: version });
    }
    if bytes[6] != expected as u8 {
        return Err(CodecError::WrongKind { found: bytes[6], expected: expected as u8 });
    }
    let len = u64::from_le_bytes(bytes[7..15].try_into().expect("8 bytes")) as usize;
    if HEADER_LEN + len != body_end {
        return Err(CodecError::Truncated);
    }
    Ok(&bytes[HEADER_LEN..body_end])
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or(CodecError::Truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn i64(&mut self) -> Result<i64, CodecError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize, CodecError> {
        usize::try_from(self.u64()?).map_err(|_| CodecError::Malformed("length overflow".into()))
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CodecError::Malformed("invalid UTF-8".into()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.usize()?;
        self.take(n)
    }

    pub fn finish(self) -> Result<(), CodecError> {
        if self.pos != self.buf.len() {
            return Err(CodecError::Malformed(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}
