use crate::dartboard::{DartPlacement, Dartboard};
use crate::error::{Error, Result};
use crate::packed::{BitReader, BitWriter};

use super::{
    begin_blob, check_same_board, expect_kind, finish_blob, write_board, BlobReader, FreeMass,
    Mergeable, Sketch, KIND_PCSA,
};

/// Base-q PCSA: one bit per cell, set iff some dart landed in it.
#[derive(Debug, Clone)]
pub struct PcsaSketch {
    board: Dartboard,
    columns: Vec<u128>,
    free: FreeMass,
}

impl PcsaSketch {
    pub fn new(board: Dartboard) -> Self {
        let m = board.m();
        Self {
            free: FreeMass::new(vec![1.0 / m as f64; m]),
            columns: vec![0; m],
            board,
        }
    }

    pub fn board(&self) -> &Dartboard {
        &self.board
    }

    pub fn is_set(&self, column: usize, level: u32) -> bool {
        self.columns[column] >> level & 1 == 1
    }

    pub fn update(&mut self, dart: DartPlacement) -> Result<bool> {
        self.board.check(dart)?;
        Ok(self.update_unchecked(dart))
    }

    #[inline]
    fn update_unchecked(&mut self, dart: DartPlacement) -> bool {
        let bit = 1u128 << dart.level;
        let col = &mut self.columns[dart.column];
        if *col & bit != 0 {
            return false;
        }
        *col |= bit;
        let left = self.free.column(dart.column) - self.board.cell_area(dart.column, dart.level);
        self.free.set(dart.column, left.max(0.0));
        true
    }

    fn column_free(&self, c: usize) -> f64 {
        if self.columns[c] == 0 {
            return 1.0 / self.board.m() as f64;
        }
        (0..=self.board.max_level())
            .filter(|&l| !self.is_set(c, l))
            .map(|l| self.board.cell_area(c, l))
            .sum()
    }

    fn rebuild_free(&mut self) {
        self.free = FreeMass::new((0..self.board.m()).map(|c| self.column_free(c)).collect());
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let (mut r, kind, seed) = BlobReader::open(bytes)?;
        expect_kind(kind, KIND_PCSA)?;
        let board = r.board(seed)?;
        Self::decode_state(board, r.rest())
    }

    fn decode_state(board: Dartboard, state: &[u8]) -> Result<Self> {
        let depth = board.max_level() + 1;
        let mut bits = BitReader::new(state);
        let mut s = Self::new(board);
        for c in 0..s.board.m() {
            let lo = bits.read(depth.min(64))? as u128;
            let hi = if depth > 64 {
                bits.read(depth - 64)? as u128
            } else {
                0
            };
            s.columns[c] = lo | hi << 64;
        }
        if state.len() != (s.board.m() * depth as usize).div_ceil(8) {
            return Err(Error::Decode("PCSA state has the wrong length".into()));
        }
        s.rebuild_free();
        Ok(s)
    }
}

impl Sketch for PcsaSketch {
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
        let mut out = begin_blob(KIND_PCSA, self.board.seed());
        write_board(&mut out, &self.board);
        let depth = self.board.max_level() + 1;
        let mut w = BitWriter::new();
        for &col in &self.columns {
            w.write(col as u64, depth.min(64));
            if depth > 64 {
                w.write((col >> 64) as u64, depth - 64);
            }
        }
        out.extend(w.finish());
        finish_blob(out)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::decode(bytes)
    }
}

impl Mergeable for PcsaSketch {
    fn merge(&self, other: &Self) -> Result<Self> {
        check_same_board(&self.board, &other.board)?;
        let mut out = self.clone();
        for (a, b) in out.columns.iter_mut().zip(&other.columns) {
            *a |= b;
        }
        out.rebuild_free();
        Ok(out)
    }
}

impl PartialEq for PcsaSketch {
    fn eq(&self, other: &Self) -> bool {
        self.board == other.board && self.columns == other.columns
    }
}
