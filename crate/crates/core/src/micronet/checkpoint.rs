//! Versioned little-endian checkpoint:
//!
//! ```text
//! magic  "TFCKPT\0\0"            8 bytes
//! version u32
//! input_side, kernel, pool_grid, n_classes, n_widths  u32 each
//! widths  u32 * n_widths
//! n_params u64
//! params  f32 * n_params
//! ```

use std::fs;
use std::path::Path;

use super::{Arch, Model};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TFCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn to_bytes(model: &Model<f32>) -> Vec<u8> {
    let arch = model.arch();
    let mut out = Vec::with_capacity(64 + 4 * model.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [
        arch.input_side,
        arch.kernel,
        arch.pool_grid,
        arch.n_classes,
        arch.conv_widths.len(),
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for w in &arch.conv_widths {
        out.extend_from_slice(&(*w as u32).to_le_bytes());
    }
    out.extend_from_slice(&(model.n_params() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at + n;
        let s = self
            .buf
            .get(self.at..end)
            .ok_or_else(|| Error::Ingest("truncated checkpoint".into()))?;
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Model<f32>> {
    let mut r = Reader { buf, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Ingest("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Ingest(format!("unsupported checkpoint version {version}")));
    }
    let input_side = r.u32()? as usize;
    let kernel = r.u32()? as usize;
    let pool_grid = r.u32()? as usize;
    let n_classes = r.u32()? as usize;
    let n_widths = r.u32()? as usize;
    let conv_widths = (0..n_widths)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let arch = Arch {
        input_side,
        conv_widths,
        kernel,
        pool_grid,
        n_classes,
    };
    let n = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let params = r
        .take(n.checked_mul(4).ok_or_else(|| Error::Ingest("bad parameter count".into()))?)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if r.at != buf.len() {
        return Err(Error::Ingest("trailing bytes in checkpoint".into()));
    }
    Model::from_params(&arch, params)
}

pub fn write_checkpoint(model: &Model<f32>, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Model<f32>> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}
