//! Binary state checkpoints.
//!
//! Layout (little endian): magic `UNILAB01`, `u32` factor count, one `u32`
//! per factor dimension, `u64` snapshot index, `f64` time, then `(re, im)`
//! `f64` pairs for every amplitude.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use unilab_core::{Error, Result, SpaceLayout, StateVector, C64};

pub const MAGIC: &[u8; 8] = b"UNILAB01";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub snapshot_index: u64,
    pub time: f64,
}

fn corrupt(msg: impl std::fmt::Display) -> Error {
    Error::InvalidState(format!("corrupt checkpoint: {msg}"))
}

pub fn encode(state: &StateVector, meta: CheckpointMeta) -> Vec<u8> {
    let factors = state.layout().factors();
    let mut out = Vec::with_capacity(8 + 4 + 4 * factors.len() + 16 + 16 * state.amplitudes().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(factors.len() as u32).to_le_bytes());
    for &d in factors {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&meta.snapshot_index.to_le_bytes());
    out.extend_from_slice(&meta.time.to_le_bytes());
    for z in state.amplitudes() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
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
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(corrupt(format!("truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Parses a checkpoint. When `expected` is given the stored factor
/// dimensions must match it exactly.
pub fn decode(bytes: &[u8], expected: Option<&SpaceLayout>) -> Result<(StateVector, CheckpointMeta)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(corrupt("bad magic (expected UNILAB01)"));
    }
    let count = r.u32("factor count")? as usize;
    if count == 0 || count > 64 {
        return Err(corrupt(format!("implausible factor count {count}")));
    }
    let dims = (0..count)
        .map(|_| r.u32("factor dimensions").map(|d| d as usize))
        .collect::<Result<Vec<usize>>>()?;
    let layout = SpaceLayout::new(dims).map_err(corrupt)?;
    if let Some(exp) = expected {
        if exp != &layout {
            return Err(corrupt(format!(
                "factor dimensions {:?} do not match the configuration {:?}",
                layout.factors(),
                exp.factors()
            )));
        }
    }
    let snapshot_index = r.u64("snapshot index")?;
    let time = r.f64("time")?;
    let n = layout.total_dim();
    let payload = r.take(n.checked_mul(16).ok_or_else(|| corrupt("dimension overflow"))?, "amplitudes")?;
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let amps = payload
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    let state = StateVector::from_amplitudes(Arc::new(layout), amps)?;
    Ok((state, CheckpointMeta { snapshot_index, time }))
}

/// Writes atomically via a sibling temporary file.
pub fn checkpoint_write(state: &StateVector, meta: CheckpointMeta, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let io = |e: std::io::Error| Error::Resource(format!("cannot write checkpoint {}: {e}", path.display()));
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(&encode(state, meta)).map_err(io)?;
    f.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn checkpoint_read(path: &Path, expected: Option<&SpaceLayout>) -> Result<(StateVector, CheckpointMeta)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::InvalidState(format!("cannot read checkpoint {}: {e}", path.display())))?;
    decode(&bytes, expected)
}
