//! Checkpoint format: `MFGCKPT\0`, version, grid shape, iteration, the
//! five state arrays and the history, followed by a SHA-256 of everything
//! before it. All numbers little-endian.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{HistoryEntry, SolveState, SplitFlux};
use crate::error::{MfgError, Result};
use crate::grid::CellField;

const MAGIC: &[u8; 8] = b"MFGCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(b: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        b.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_opt(b: &mut Vec<u8>, v: Option<f64>) {
    b.push(v.is_some() as u8);
    b.extend_from_slice(&v.unwrap_or(0.0).to_le_bytes());
}

pub fn encode(s: &SolveState) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_u64(&mut b, s.m.ncells() as u64);
    put_u64(&mut b, s.m.slices() as u64);
    put_u64(&mut b, s.z.slots as u64);
    put_u64(&mut b, s.z.intervals as u64);
    put_u64(&mut b, s.iteration as u64);
    put_u64(&mut b, s.history.len() as u64);
    for f in [&s.m, &s.m_bar, &s.u] {
        put_f64s(&mut b, f.data());
    }
    put_f64s(&mut b, &s.z.data);
    put_f64s(&mut b, &s.z_bar.data);
    for h in &s.history {
        put_u64(&mut b, h.iteration as u64);
        put_opt(&mut b, h.primal);
        put_f64s(&mut b, &[h.dual]);
        put_opt(&mut b, h.gap);
        put_opt(&mut b, h.rel_gap);
        put_f64s(&mut b, &[h.residual]);
    }
    let digest = Sha256::digest(&b);
    b.extend_from_slice(&digest);
    b
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.at + n > self.b.len() {
            return Err(MfgError::Format("truncated checkpoint".into()));
        }
        self.at += n;
        Ok(&self.b[self.at - n..self.at])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn opt(&mut self) -> Result<Option<f64>> {
        let flag = self.take(1)?[0];
        let v = self.f64()?;
        Ok((flag == 1).then_some(v))
    }
}

/// Decode and check against the expected `(ncells, levels, slots)`.
pub fn decode(bytes: &[u8], shape: (usize, usize, usize)) -> Result<SolveState> {
    if bytes.len() < 12 + 32 || &bytes[..8] != MAGIC {
        return Err(MfgError::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(MfgError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(MfgError::Checksum("checkpoint".into()));
    }
    let mut r = Reader { b: body, at: 12 };
    let nc = r.u64()? as usize;
    let levels = r.u64()? as usize;
    let slots = r.u64()? as usize;
    let intervals = r.u64()? as usize;
    if (nc, levels, slots) != shape || intervals + 1 != levels {
        return Err(MfgError::Shape(format!(
            "checkpoint holds {nc} cells x {levels} levels x {slots} slots, grid needs {} x {} x {}",
            shape.0, shape.1, shape.2
        )));
    }
    let iteration = r.u64()? as usize;
    let nh = r.u64()? as usize;
    let mut cells = Vec::new();
    for _ in 0..3 {
        cells.push(CellField::from_vec(nc, levels, r.f64s(nc * levels)?)?);
    }
    let nz = intervals * nc * slots;
    let z = SplitFlux {
        slots,
        ncells: nc,
        intervals,
        data: r.f64s(nz)?,
    };
    let z_bar = SplitFlux {
        data: r.f64s(nz)?,
        ..z.clone()
    };
    let mut history = Vec::with_capacity(nh.min(1 << 20));
    for _ in 0..nh {
        history.push(HistoryEntry {
            iteration: r.u64()? as usize,
            primal: r.opt()?,
            dual: r.f64()?,
            gap: r.opt()?,
            rel_gap: r.opt()?,
            residual: r.f64()?,
        });
    }
    if r.at != body.len() {
        return Err(MfgError::Format("trailing bytes in checkpoint".into()));
    }
    let u = cells.pop().unwrap();
    let m_bar = cells.pop().unwrap();
    let m = cells.pop().unwrap();
    Ok(SolveState {
        m,
        z,
        u,
        m_bar,
        z_bar,
        iteration,
        history,
    })
}

pub fn save_checkpoint(path: &Path, s: &SolveState) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode(s))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, p: &crate::problem::Problem) -> Result<SolveState> {
    let bytes = std::fs::read(path)?;
    decode(&bytes, (p.grid.ncells(), p.grid.levels(), 2 * p.dim()))
}
