//! Binary policy checkpoints.
//!
//! Layout (little-endian): magic `CMCP`, `u32` format version, then for each
//! parameter array in declared order: `u32` name length, name bytes, `u32`
//! rank, `u32` per dimension, and the values as `f64`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::learn::{ParamArray, PolicyParams};

pub const MAGIC: &[u8; 4] = b"CMCP";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &PolicyParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + params.len() * 8 + 256);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (name, array) in PolicyParams::NAMES.iter().zip(params.arrays()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(array.shape.len() as u32).to_le_bytes());
        for &d in &array.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &array.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::Checkpoint(format!(
                "truncated file while reading {what} at byte {}",
                self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<PolicyParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint(
            "bad magic bytes, not a policy checkpoint".into(),
        ));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let mut arrays = Vec::with_capacity(PolicyParams::NAMES.len());
    for (expected_name, expected_shape) in PolicyParams::NAMES
        .iter()
        .zip(PolicyParams::expected_shapes())
    {
        let len = r.u32("name length")? as usize;
        let name = r.take(len, "name")?;
        if name != expected_name.as_bytes() {
            return Err(Error::Checkpoint(format!(
                "expected array `{expected_name}`, found `{}`",
                String::from_utf8_lossy(name)
            )));
        }
        let rank = r.u32("rank")? as usize;
        if rank != expected_shape.len() {
            return Err(Error::Checkpoint(format!(
                "`{expected_name}` has rank {rank}, expected {}",
                expected_shape.len()
            )));
        }
        let shape = (0..rank)
            .map(|_| r.u32("dimension").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape != expected_shape {
            return Err(Error::Checkpoint(format!(
                "`{expected_name}` has shape {shape:?}, expected {expected_shape:?}"
            )));
        }
        let count: usize = shape.iter().product();
        let raw = r.take(count * 8, "values")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        arrays.push(ParamArray { shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after last array",
            bytes.len() - r.pos
        )));
    }
    PolicyParams::from_arrays(arrays)
}

pub fn save_checkpoint(params: &PolicyParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<PolicyParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
