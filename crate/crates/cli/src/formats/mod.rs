//! Little-endian binary formats: EMB1 corpora, WHT1 whitening transforms
//! and FLW1 flow models.
//!
//! WHT1 and FLW1 may end with a provenance trailer: the tag `PROV`, a u32
//! byte length and that many bytes of JSON.

pub mod emb;
pub mod flw;
pub mod wht;

use std::path::Path;

use crate::error::{CliError, Result};
use crate::provenance::Provenance;

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("{0}")]
    Malformed(String),
    #[error(transparent)]
    Core(#[from] isodr_core::Error),
}

impl DecodeError {
    pub fn at(self, path: &Path) -> CliError {
        match self {
            DecodeError::Malformed(reason) => CliError::Format { path: path.to_path_buf(), reason },
            DecodeError::Core(e) => CliError::in_file(path, e),
        }
    }
}

pub type DecodeResult<T> = std::result::Result<T, DecodeError>;

fn malformed(msg: impl Into<String>) -> DecodeError {
    DecodeError::Malformed(msg.into())
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn bytes(&mut self, n: usize, what: &str) -> DecodeResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            malformed(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> DecodeResult<[u8; N]> {
        Ok(self.bytes(N, what)?.try_into().expect("length checked"))
    }

    pub(crate) fn u8(&mut self, what: &str) -> DecodeResult<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> DecodeResult<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    pub(crate) fn u32(&mut self, what: &str) -> DecodeResult<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    pub(crate) fn u64(&mut self, what: &str) -> DecodeResult<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    pub(crate) fn f64(&mut self, what: &str) -> DecodeResult<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    pub(crate) fn usize_u32(&mut self, what: &str) -> DecodeResult<usize> {
        Ok(self.u32(what)? as usize)
    }

    pub(crate) fn usize_u64(&mut self, what: &str) -> DecodeResult<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| malformed(format!("{what} does not fit in memory")))
    }

    /// Reads `n` f64 values, checking the remaining length first so a corrupt
    /// count cannot trigger a huge allocation.
    pub(crate) fn f64s(&mut self, n: usize, what: &str) -> DecodeResult<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| malformed(format!("{what} count overflows")))?;
        let raw = self.bytes(len, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> DecodeResult<()> {
        let got = self.bytes(4, "magic").map_err(|_| malformed("file too short for magic bytes"))?;
        if got != expected {
            return Err(malformed(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    pub(crate) fn version(&mut self, supported: u32) -> DecodeResult<()> {
        let v = self.u32("version")?;
        if v != supported {
            return Err(malformed(format!("unsupported version {v}, expected {supported}")));
        }
        Ok(())
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn finish(&self) -> DecodeResult<()> {
        if self.remaining() != 0 {
            return Err(malformed(format!("{} unexpected trailing bytes", self.remaining())));
        }
        Ok(())
    }

    /// Consumes an optional provenance trailer and requires end of input.
    pub(crate) fn trailer(&mut self) -> DecodeResult<Option<Provenance>> {
        if self.remaining() == 0 {
            return Ok(None);
        }
        if self.bytes(4, "trailer tag")? != PROV_TAG {
            return Err(malformed("unexpected trailing bytes (no provenance tag)"));
        }
        let len = self.usize_u32("trailer length")?;
        let json = self.bytes(len, "provenance")?;
        let prov = serde_json::from_slice(json).map_err(|e| malformed(format!("provenance JSON: {e}")))?;
        self.finish()?;
        Ok(Some(prov))
    }
}

const PROV_TAG: &[u8; 4] = b"PROV";

#[derive(Default)]
pub(crate) struct Writer {
    pub(crate) buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub(crate) fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub(crate) fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.bytes(&v.to_le_bytes());
        }
    }

    pub(crate) fn trailer(&mut self, prov: Option<&Provenance>) {
        if let Some(p) = prov {
            let json = serde_json::to_vec(p).expect("provenance serializes");
            self.bytes(PROV_TAG);
            self.u32(u32::try_from(json.len()).expect("provenance under 4 GiB"));
            self.bytes(&json);
        }
    }
}

pub(crate) fn narrow_u32(v: usize, what: &str) -> Result<u32, isodr_core::Error> {
    u32::try_from(v).map_err(|_| isodr_core::Error::Value(format!("{what} {v} exceeds u32")))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
