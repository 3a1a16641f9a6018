use crate::dartboard::{DartPlacement, Dartboard};
use crate::error::{invalid, Error, Result};
use crate::packed::{BitReader, BitWriter};

use super::{
    begin_blob, bits_for, check_same_board, expect_kind, finish_blob, write_board, BlobReader,
    FreeMass, Mergeable, Sketch, KIND_LOGLOG,
};

/// Marks a column that has not seen a dart.
const EMPTY: i8 = -1;

/// Base-q LogLog: per column, the highest level hit so far. Every cell at or
/// below the register is occupied, everything above it is free.
#[derive(Debug, Clone)]
pub struct LogLogSketch {
    board: Dartboard,
    registers: Vec<i8>,
    free: FreeMass,
}

impl LogLogSketch {
    pub fn new(board: Dartboard) -> Self {
        let m = board.m();
        Self {
            free: FreeMass::new(vec![1.0 / m as f64; m]),
            registers: vec![EMPTY; m],
            board,
        }
    }

    pub fn board(&self) -> &Dartboard {
        &self.board
    }

    /// Register of `column`, `None` if the column is empty.
    pub fn register(&self, column: usize) -> Option<u32> {
        let r = self.registers[column];
        (r >= 0).then_some(r as u32)
    }

    pub fn update(&mut self, dart: DartPlacement) -> Result<bool> {
        self.board.check(dart)?;
        Ok(self.update_unchecked(dart))
    }

    #[inline]
    fn update_unchecked(&mut self, dart: DartPlacement) -> bool {
        let level = dart.level as i8;
        let reg = &mut self.registers[dart.column];
        if level <= *reg {
            return false;
        }
        *reg = level;
        self.free
            .set(dart.column, self.board.area_above(dart.column, level as i64));
        true
    }

    /// HyperLogLog estimate `alpha * m^2 / sum_j 2^-rank_j` with
    /// `rank = register + 1` (0 for an empty column), i.e. the position of
    /// the leading one bit. Requires base 2.
    pub fn hll_estimate(&self, alpha: f64) -> Result<f64> {
        if self.board.params().q() != 2.0 {
            return Err(invalid(format!(
                "the HyperLogLog estimator needs base q = 2, sketch has q = {}",
                self.board.params().q()
            )));
        }
        let ranks: Vec<u32> = self.registers.iter().map(|&r| (r + 1) as u32).collect();
        Ok(hll_estimate_from_ranks(&ranks, alpha))
    }

    fn register_bits(&self) -> u32 {
        bits_for(self.board.max_level() as u64 + 2)
    }

    fn rebuild_free(&mut self) {
        let cols = (0..self.board.m())
            .map(|c| self.board.area_above(c, self.registers[c] as i64))
            .collect();
        self.free = FreeMass::new(cols);
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let (mut r, kind, seed) = BlobReader::open(bytes)?;
        expect_kind(kind, KIND_LOGLOG)?;
        let board = r.board(seed)?;
        Self::decode_state(board, r.rest())
    }

    fn decode_state(board: Dartboard, state: &[u8]) -> Result<Self> {
        let mut s = Self::new(board);
        let width = s.register_bits();
        if state.len() != (s.board.m() * width as usize).div_ceil(8) {
            return Err(Error::Decode("LogLog state has the wrong length".into()));
        }
        let mut bits = BitReader::new(state);
        for c in 0..s.board.m() {
            let v = bits.read(width)? as i64 - 1;
            if v > s.board.max_level() as i64 {
                return Err(Error::Decode(format!("register {v} above max level")));
            }
            s.registers[c] = v as i8;
        }
        s.rebuild_free();
        Ok(s)
    }
}

/// `alpha * m^2 / sum_j 2^-rank_j`.
pub fn hll_estimate_from_ranks(ranks: &[u32], alpha: f64) -> f64 {
    let m = ranks.len() as f64;
    let denom: f64 = ranks.iter().map(|&r| (-(r as f64)).exp2()).sum();
    alpha * m * m / denom
}

impl Sketch for LogLogSketch {
    #[inline]
    fn insert(&mut self, element: u64) -> bool {
        let dart = self.board.throw(element);
        self.update_unchecked(dart)
    }

    #[inline]
    fn free_area(&self) -> f64 {
        self.free.total()
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = begin_blob(KIND_LOGLOG, self.board.seed());
        write_board(&mut out, &self.board);
        let width = self.register_bits();
        let mut w = BitWriter::new();
        for &r in &self.registers {
            w.write((r as i64 + 1) as u64, width);
        }
        out.extend(w.finish());
        finish_blob(out)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::decode(bytes)
    }
}

impl Mergeable for LogLogSketch {
    fn merge(&self, other: &Self) -> Result<Self> {
        check_same_board(&self.board, &other.board)?;
        let mut out = self.clone();
        for (a, &b) in out.registers.iter_mut().zip(&other.registers) {
            *a = (*a).max(b);
        }
        out.rebuild_free();
        Ok(out)
    }
}

impl PartialEq for LogLogSketch {
    fn eq(&self, other: &Self) -> bool {
        self.board == other.board && self.registers == other.registers
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dartboard::{OffsetVector, PartitionParams};

    fn sketch(q: f64, m: usize) -> LogLogSketch {
        let p = PartitionParams::new(q, m).unwrap();
        LogLogSketch::new(Dartboard::new(p, OffsetVector::zeros(m), 9).unwrap())
    }

    fn dart(column: usize, level: u32) -> DartPlacement {
        DartPlacement { column, level }
    }

    #[test]
    fn register_max() {
        let mut s = sketch(2.0, 1);
        assert!(s.update(dart(0, 3)).unwrap());
        assert_eq!(s.register(0), Some(3));
        assert!(!s.update(dart(0, 2)).unwrap());
        assert!(!s.update(dart(0, 3)).unwrap());
        assert!(s.update(dart(0, 5)).unwrap());
        assert_eq!(s.register(0), Some(5));
        assert!(s.update(dart(1, 0)).is_err());
    }

    #[test]
    fn free_area_cases() {
        let mut one = sketch(2.0, 1);
        assert_eq!(one.free_area(), 1.0);
        one.update(dart(0, 0)).unwrap();
        assert_eq!(one.free_area(), 0.5);

        let mut two = sketch(2.0, 2);
        two.update(dart(0, 0)).unwrap();
        two.update(dart(1, 1)).unwrap();
        assert!((two.free_area() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn hll_formula() {
        let a = 0.7;
        assert!((hll_estimate_from_ranks(&[0; 4], a) - 4.0 * a).abs() < 1e-12);
        assert!((hll_estimate_from_ranks(&[1; 4], a) - 8.0 * a).abs() < 1e-12);
        let mut s = sketch(2.0, 4);
        assert!((s.hll_estimate(a).unwrap() - 4.0 * a).abs() < 1e-12);
        for c in 0..4 {
            s.update(dart(c, 0)).unwrap();
        }
        assert!((s.hll_estimate(a).unwrap() - 8.0 * a).abs() < 1e-12);
        assert!(sketch(2.5, 4).hll_estimate(a).is_err());
    }

    #[test]
    fn bytes_roundtrip() {
        let mut s = sketch(2.0, 19);
        for e in 0..5000 {
            s.insert(e);
        }
        let bytes = s.to_bytes();
        let back = LogLogSketch::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert!((back.free_area() - s.free_area()).abs() < 1e-15);
        // 4-byte prefix, 13-byte header, 15-byte partition header, 19 x 7 bits
        assert_eq!(bytes.len(), 4 + 13 + 15 + (19 * 7usize).div_ceil(8));
    }
}
