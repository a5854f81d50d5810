//! Binary field snapshots.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8 | magic `GPPSSNAP` |
//! | 4 | format version (1) |
//! | 4 | byte-order mark `0x01020304` |
//! | 4 | dtype code (1 = complex128) |
//! | 4 | rank `d` |
//! | 8·d | shape, `u64` per axis |
//! | 8·d | half extents, `f64` per axis |
//! | 16·N | values as `(re, im)` pairs of `f64`, last axis fastest |

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex;

use crate::error::SnapshotError;
use crate::grid::{Grid, Wavefunction};

pub const MAGIC: &[u8; 8] = b"GPPSSNAP";
pub const VERSION: u32 = 1;
pub const BYTE_ORDER_MARK: u32 = 0x0102_0304;
pub const DTYPE_COMPLEX128: u32 = 1;

/// A decoded snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub shape: Vec<usize>,
    pub half_extents: Vec<f64>,
    pub values: Vec<Complex<f64>>,
}

impl Snapshot {
    pub fn from_wavefunction(psi: &Wavefunction<f64>) -> Self {
        let grid = psi.grid();
        Self {
            shape: grid.shape().to_vec(),
            half_extents: grid.axes().iter().map(|a| a.half_extent()).collect(),
            values: psi.values().to_vec(),
        }
    }

    /// Rebuilds the grid and field.
    pub fn to_wavefunction(&self) -> Result<Wavefunction<f64>, SnapshotError> {
        let grid = Arc::new(Grid::new(&self.half_extents, &self.shape)?);
        Ok(Wavefunction::new(grid, self.values.clone())?)
    }

    pub fn encode(&self) -> Vec<u8> {
        let d = self.shape.len();
        let mut out = Vec::with_capacity(24 + 16 * d + 16 * self.values.len());
        out.extend_from_slice(MAGIC);
        for word in [VERSION, BYTE_ORDER_MARK, DTYPE_COMPLEX128, d as u32] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        for &n in &self.shape {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for &l in &self.half_extents {
            out.extend_from_slice(&l.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(SnapshotError::Magic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(SnapshotError::Version(version));
        }
        if r.u32()? != BYTE_ORDER_MARK {
            return Err(SnapshotError::Endianness);
        }
        let dtype = r.u32()?;
        if dtype != DTYPE_COMPLEX128 {
            return Err(SnapshotError::Dtype(dtype));
        }
        let d = r.u32()? as usize;
        if !(1..=3).contains(&d) {
            return Err(SnapshotError::Malformed(format!("rank {d}")));
        }
        let shape = (0..d).map(|_| r.u64().map(|n| n as usize)).collect::<Result<Vec<_>, _>>()?;
        let half_extents = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let len = shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        let len = len.ok_or_else(|| SnapshotError::Malformed("shape overflows".into()))?;
        if r.remaining() != len * 16 {
            return Err(SnapshotError::Malformed(format!(
                "payload has {} bytes, shape needs {}",
                r.remaining(),
                len * 16
            )));
        }
        let values = (0..len).map(|_| Ok(Complex::new(r.f64()?, r.f64()?))).collect::<Result<Vec<_>, SnapshotError>>()?;
        Ok(Self { shape, half_extents, values })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| SnapshotError::Malformed("unexpected end of header".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn write_snapshot(path: &Path, psi: &Wavefunction<f64>) -> Result<(), SnapshotError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&Snapshot::from_wavefunction(psi).encode())?;
    f.sync_all()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, SnapshotError> {
    Snapshot::decode(&fs::read(path)?)
}
