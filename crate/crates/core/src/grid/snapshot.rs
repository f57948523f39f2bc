//! Binary snapshot format.
//!
//! ```text
//! magic      8 bytes  "MFGSNAP\0"
//! version    u32
//! kind       u32      (see SnapshotKind)
//! ndim       u32
//! cells      ndim × u64
//! bounds     ndim × (f64, f64)
//! horizon    f64
//! time_steps u64
//! slices     u64
//! slice_len  u64
//! data       slices × slice_len × f64, slice-major, row-major cells
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Grid, RectDomain};
use crate::error::{MfgError, Result};

const MAGIC: &[u8; 8] = b"MFGSNAP\0";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    Density,
    Flux,
    Value,
    Cost,
    FluxSplit,
    Influx,
}

impl SnapshotKind {
    fn code(self) -> u32 {
        match self {
            SnapshotKind::Density => 1,
            SnapshotKind::Flux => 2,
            SnapshotKind::Value => 3,
            SnapshotKind::Cost => 4,
            SnapshotKind::FluxSplit => 5,
            SnapshotKind::Influx => 6,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        Ok(match c {
            1 => SnapshotKind::Density,
            2 => SnapshotKind::Flux,
            3 => SnapshotKind::Value,
            4 => SnapshotKind::Cost,
            5 => SnapshotKind::FluxSplit,
            6 => SnapshotKind::Influx,
            _ => return Err(MfgError::Format(format!("unknown snapshot kind {c}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: SnapshotKind,
    pub cells: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
    pub horizon: f64,
    pub time_steps: usize,
    pub slices: usize,
    pub slice_len: usize,
    pub data: Vec<f64>,
}

impl Snapshot {
    pub fn new(grid: &Grid, kind: SnapshotKind, slices: usize, data: Vec<f64>) -> Result<Self> {
        if slices == 0 || data.len() % slices != 0 {
            return Err(MfgError::Shape(format!(
                "snapshot: {} values do not split into {slices} slices",
                data.len()
            )));
        }
        Ok(Snapshot {
            kind,
            cells: grid.cells().to_vec(),
            bounds: grid.domain().bounds().to_vec(),
            horizon: grid.domain().horizon(),
            time_steps: grid.time_steps(),
            slices,
            slice_len: data.len() / slices,
            data,
        })
    }

    /// Rebuild the grid the snapshot was taken on.
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(
            RectDomain::new(self.bounds.clone(), self.horizon)?,
            self.cells.clone(),
            self.time_steps,
        )
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.data[k * self.slice_len..(k + 1) * self.slice_len]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(64 + 8 * self.data.len());
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        b.extend_from_slice(&self.kind.code().to_le_bytes());
        b.extend_from_slice(&(self.cells.len() as u32).to_le_bytes());
        for &n in &self.cells {
            b.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for &(lo, hi) in &self.bounds {
            b.extend_from_slice(&lo.to_le_bytes());
            b.extend_from_slice(&hi.to_le_bytes());
        }
        b.extend_from_slice(&self.horizon.to_le_bytes());
        for v in [self.time_steps, self.slices, self.slice_len] {
            b.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for v in &self.data {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { b: bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(MfgError::Format("not a snapshot file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(MfgError::Version {
                found: version,
                expected: SNAPSHOT_VERSION,
            });
        }
        let kind = SnapshotKind::from_code(r.u32()?)?;
        let ndim = r.u32()? as usize;
        if ndim == 0 || ndim > 8 {
            return Err(MfgError::Format(format!("implausible dimension {ndim}")));
        }
        let cells = (0..ndim)
            .map(|_| r.u64().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let bounds = (0..ndim)
            .map(|_| Ok((r.f64()?, r.f64()?)))
            .collect::<Result<Vec<_>>>()?;
        let horizon = r.f64()?;
        let time_steps = r.u64()? as usize;
        let slices = r.u64()? as usize;
        let slice_len = r.u64()? as usize;
        let n = slices
            .checked_mul(slice_len)
            .filter(|n| n.checked_mul(8) == Some(r.remaining()))
            .ok_or_else(|| {
                MfgError::Format(format!(
                    "payload of {} bytes does not hold {slices} x {slice_len} values",
                    r.remaining()
                ))
            })?;
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Snapshot {
            kind,
            cells,
            bounds,
            horizon,
            time_steps,
            slices,
            slice_len,
            data,
        })
    }
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.b.len() {
            return Err(MfgError::Format("truncated snapshot".into()));
        }
        let s = &self.b[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn remaining(&self) -> usize {
        self.b.len() - self.at
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&snap.to_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    Snapshot::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn sample() -> Snapshot {
        let g = build_grid(
            RectDomain::new(vec![(0.0, 1.0), (0.0, 2.0)], 1.5).unwrap(),
            &[2, 3],
            4,
        )
        .unwrap();
        let data: Vec<f64> = (0..30).map(|i| i as f64 * 0.5 - 3.0).collect();
        Snapshot::new(&g, SnapshotKind::Density, 5, data).unwrap()
    }

    #[test]
    fn round_trip() {
        let s = sample();
        let back = Snapshot::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(s, back);
        let g = back.grid().unwrap();
        assert_eq!(g.cells(), &[2, 3]);
        assert_eq!(g.time_steps(), 4);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let b = sample().to_bytes();
        assert_eq!(&b[..8], MAGIC);
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[16..20], &[2, 0, 0, 0]);
        // first payload value -3.0
        let tail = &b[b.len() - 30 * 8..b.len() - 29 * 8];
        assert_eq!(f64::from_le_bytes(tail.try_into().unwrap()), -3.0);
    }

    #[test]
    fn rejects_bad_input() {
        let mut b = sample().to_bytes();
        assert!(matches!(
            Snapshot::from_bytes(&b[..b.len() - 3]),
            Err(MfgError::Format(_))
        ));
        b[8] = 9;
        assert!(matches!(
            Snapshot::from_bytes(&b),
            Err(MfgError::Version { found: 9, .. })
        ));
        assert!(matches!(
            Snapshot::from_bytes(b"garbage!"),
            Err(MfgError::Format(_))
        ));
    }
}
