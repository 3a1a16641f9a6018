//! Dartboard sketches: base-q PCSA, base-q LogLog (with the HyperLogLog
//! estimator), (k,m)-MinCount and Curtain.
//!
//! Every sketch reports its *free area*: the total mass of cells a new dart
//! could land in and change the state. That is exactly the probability that
//! the next distinct element changes the sketch.
//!
//! # Serialized layout
//!
//! All integers are little-endian.
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | payload length `N` (bytes following this field) |
//! | 4 | magic `DSK1` |
//! | 1 | kind: 1 PCSA, 2 LogLog, 3 MinCount, 4 Curtain; bit 7 set for a martingale wrapper, bit 6 for a 14-bit estimate register |
//! | 8 | hash seed |
//!
//! Board sketches (PCSA, LogLog, Curtain) continue with the partition
//! header: `q` as f64, `m` as u32, `max_level` u8, `sawtooth` u8 and an
//! offsets tag u8 (0 none, 1 uniform, 2 curtain, 3 explicit followed by `m`
//! f64 values). MinCount stores `m` u32 and `k` u32 instead.
//!
//! The state follows as a bit stream (least significant bit first, padded to
//! a whole byte):
//!
//! * PCSA: `m * (max_level + 1)` bits, column-major, bit `k` of column `j`
//!   set iff cell `(j, k)` holds a dart.
//! * LogLog: `m` registers of `ceil(log2(max_level + 2))` bits storing
//!   `level + 1` (0 = empty column).
//! * MinCount: not a bit stream; per bucket a u8 count followed by that many
//!   f64 hash reals in ascending order.
//! * Curtain: `a` u8 and `h` u8, then `g0 + 1` in `ceil(log2(max_level + 2))`
//!   bits, `m - 1` offset codes of `log2(2a)` bits, and `h * m` window bits
//!   (column-major).
//!
//! A martingale wrapper appends the estimate and the retrospective variance
//! as two f64 after the inner state.

mod curtain;
mod loglog;
mod mincount;
mod pcsa;

pub use curtain::{CurtainParams, CurtainSketch, MAX_A};
pub use loglog::{hll_estimate_from_ranks, LogLogSketch};
pub use mincount::MinCountSketch;
pub use pcsa::PcsaSketch;

use crate::dartboard::{Dartboard, OffsetVector, PartitionParams};
use crate::error::{Error, Result};

/// A duplicate-insensitive sketch that knows its own state-change probability.
pub trait Sketch {
    /// Hashes `element` and updates the state; returns whether it changed.
    fn insert(&mut self, element: u64) -> bool;

    /// Probability that the next distinct element changes the state.
    fn free_area(&self) -> f64;

    fn to_bytes(&self) -> Vec<u8>;

    fn from_bytes(bytes: &[u8]) -> Result<Self>
    where
        Self: Sized;
}

/// Sketches whose state for `A ∪ B` is computable from the states for `A` and `B`.
pub trait Mergeable: Sized {
    fn merge(&self, other: &Self) -> Result<Self>;
}

/// Per-column free mass plus a running total.
///
/// Untouched columns (free mass exactly `1/m`) are counted rather than
/// summed, so an empty sketch reports exactly 1. The rest is a running sum
/// updated by deltas; once it drops below half of its largest value since
/// the last recomputation it is re-summed, so cancellation never eats more
/// than a bit of precision.
#[derive(Debug, Clone)]
pub(crate) struct FreeMass {
    columns: Vec<f64>,
    full: f64,
    untouched: usize,
    partial: f64,
    anchor: f64,
    total: f64,
}

impl FreeMass {
    pub(crate) fn new(columns: Vec<f64>) -> Self {
        let full = 1.0 / columns.len() as f64;
        let mut s = Self {
            columns,
            full,
            untouched: 0,
            partial: 0.0,
            anchor: 0.0,
            total: 0.0,
        };
        s.resum();
        s
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.total
    }

    #[inline]
    pub(crate) fn column(&self, c: usize) -> f64 {
        self.columns[c]
    }

    #[inline]
    pub(crate) fn set(&mut self, c: usize, value: f64) {
        let old = self.columns[c];
        if old == self.full {
            self.untouched -= 1;
        } else {
            self.partial -= old;
        }
        if value == self.full {
            self.untouched += 1;
        } else {
            self.partial += value;
        }
        self.columns[c] = value;
        if self.partial < 0.5 * self.anchor {
            self.resum();
        } else {
            self.anchor = self.anchor.max(self.partial);
            self.update_total();
        }
    }

    #[inline]
    fn update_total(&mut self) {
        self.total = self.untouched as f64 / self.columns.len() as f64 + self.partial;
    }

    fn resum(&mut self) {
        let full = self.full;
        self.untouched = self.columns.iter().filter(|&&v| v == full).count();
        self.partial = self.columns.iter().filter(|&&v| v != full).sum();
        self.anchor = self.partial;
        self.update_total();
    }
}

pub(crate) const MAGIC: &[u8; 4] = b"DSK1";
pub(crate) const KIND_PCSA: u8 = 1;
pub(crate) const KIND_LOGLOG: u8 = 2;
pub(crate) const KIND_MINCOUNT: u8 = 3;
pub(crate) const KIND_CURTAIN: u8 = 4;
pub(crate) const FLAG_MARTINGALE: u8 = 0x80;
pub(crate) const FLAG_QUANTIZED: u8 = 0x40;

/// Bits needed for `values` distinct codes.
pub(crate) fn bits_for(values: u64) -> u32 {
    if values <= 1 {
        0
    } else {
        64 - (values - 1).leading_zeros()
    }
}

pub(crate) fn begin_blob(kind: u8, seed: u64) -> Vec<u8> {
    let mut out = vec![0u8; 4];
    out.extend_from_slice(MAGIC);
    out.push(kind);
    out.extend_from_slice(&seed.to_le_bytes());
    out
}

pub(crate) fn finish_blob(mut out: Vec<u8>) -> Vec<u8> {
    let n = (out.len() - 4) as u32;
    out[..4].copy_from_slice(&n.to_le_bytes());
    out
}

pub(crate) fn write_board(out: &mut Vec<u8>, board: &Dartboard) {
    let p = board.params();
    out.extend_from_slice(&p.q().to_le_bytes());
    out.extend_from_slice(&(p.m() as u32).to_le_bytes());
    out.push(p.max_level() as u8);
    out.push(u8::from(p.sawtooth()));
    let offsets = board.offsets();
    let m = p.m();
    if offsets.is_zero() {
        out.push(0);
    } else if OffsetVector::uniform(m).ok().as_ref() == Some(offsets) {
        out.push(1);
    } else if OffsetVector::curtain(m).ok().as_ref() == Some(offsets) {
        out.push(2);
    } else {
        out.push(3);
        for r in offsets.as_slice() {
            out.extend_from_slice(&r.to_le_bytes());
        }
    }
}

/// Cursor over a serialized sketch.
pub(crate) struct BlobReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BlobReader<'a> {
    /// Validates the length prefix and magic; returns the reader positioned
    /// after the seed together with `(kind, seed)`.
    pub(crate) fn open(bytes: &'a [u8]) -> Result<(Self, u8, u64)> {
        if bytes.len() < 17 {
            return Err(Error::Decode("blob shorter than its header".into()));
        }
        let n = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        if n + 4 != bytes.len() {
            return Err(Error::Decode(format!(
                "length prefix says {n} payload bytes, found {}",
                bytes.len() - 4
            )));
        }
        if &bytes[4..8] != MAGIC {
            return Err(Error::Decode("bad magic".into()));
        }
        let mut r = Self { bytes, pos: 8 };
        let kind = r.u8()?;
        let seed = r.u64()?;
        Ok((r, kind, seed))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Decode("blob truncated".into()))?;
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }

    pub(crate) fn board(&mut self, seed: u64) -> Result<Dartboard> {
        let q = self.f64()?;
        let m = self.u32()? as usize;
        let max_level = self.u8()? as u32;
        let sawtooth = self.u8()? != 0;
        let params = PartitionParams::new(q, m)?
            .with_max_level(max_level)?
            .with_sawtooth(sawtooth);
        let offsets = match self.u8()? {
            0 => OffsetVector::zeros(m),
            1 => OffsetVector::uniform(m)?,
            2 => OffsetVector::curtain(m)?,
            3 => OffsetVector::new((0..m).map(|_| self.f64()).collect::<Result<_>>()?)?,
            t => return Err(Error::Decode(format!("unknown offsets tag {t}"))),
        };
        Dartboard::new(params, offsets, seed)
    }
}

pub(crate) fn expect_kind(found: u8, want: u8) -> Result<()> {
    if found & 0x3f != want {
        return Err(Error::Decode(format!(
            "expected sketch kind {want}, found {}",
            found & 0x3f
        )));
    }
    Ok(())
}

pub(crate) fn check_same_board(a: &Dartboard, b: &Dartboard) -> Result<()> {
    if !a.compatible(b) {
        return Err(Error::Mismatch(
            "sketches differ in partition, offsets or hash seed".into(),
        ));
    }
    Ok(())
}
