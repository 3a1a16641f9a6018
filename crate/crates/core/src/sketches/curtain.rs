//! Curtain: a sawtooth board summarised by a curtain of column heights
//! whose neighbouring differences come from `O_a = {±1/2, ±3/2, ..., ±(a-1/2)}`,
//! plus an `h`-cell window of hit bits hanging below the curtain in every
//! column.
//!
//! Internally heights are kept in half-level units: column `i` at level `k`
//! has half-height `G = 2k + (i mod 2)`. The empty sketch sits on a virtual
//! floor one level below the sawtooth baseline (`G = -2` for even columns,
//! `-1` for odd ones), so the whole board starts free. Cells at negative
//! levels do not exist and are never counted.
//!
//! Occupancy rules for column `i` with curtain half-height `G`:
//!
//! * cells above the curtain are free;
//! * a column is *in tension* if its left step is the minimum of `O_a` or its
//!   right step is the maximum;
//! * not in tension: the curtain cell holds a dart (occupied) and the window
//!   covers the `h` cells below it;
//! * in tension: the window covers the curtain cell and the `h - 1` cells
//!   below it;
//! * window cells are occupied iff their bit is set; everything below the
//!   window is occupied.

use serde::{Deserialize, Serialize};

use crate::dartboard::{DartPlacement, Dartboard, OffsetVector, PartitionParams, DEFAULT_MAX_LEVEL};
use crate::error::{invalid, Error, Result};
use crate::packed::{BitReader, BitWriter, PackedVector};

use super::{
    begin_blob, bits_for, check_same_board, expect_kind, finish_blob, write_board, BlobReader,
    FreeMass, Mergeable, Sketch, KIND_CURTAIN,
};

/// Largest supported `a`; offset codes must fit a packed field.
pub const MAX_A: u32 = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurtainParams {
    q: f64,
    a: u32,
    h: u32,
    m: usize,
    smoothing: bool,
    max_level: u32,
}

impl CurtainParams {
    /// Smoothing defaults to on for `q >= 3` and off below.
    pub fn new(q: f64, a: u32, h: u32, m: usize) -> Result<Self> {
        PartitionParams::new(q, m)?;
        if !a.is_power_of_two() || a > MAX_A {
            return Err(invalid(format!(
                "a must be a power of two in [1, {MAX_A}], got {a}"
            )));
        }
        if h > 32 {
            return Err(invalid(format!("window height h must be at most 32, got {h}")));
        }
        Ok(Self {
            q,
            a,
            h,
            m,
            smoothing: q >= 3.0,
            max_level: DEFAULT_MAX_LEVEL,
        })
    }

    pub fn with_smoothing(mut self, smoothing: bool) -> Self {
        self.smoothing = smoothing;
        self
    }

    pub fn with_max_level(mut self, max_level: u32) -> Result<Self> {
        self.partition().with_max_level(max_level)?;
        self.max_level = max_level;
        Ok(self)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    pub fn h(&self) -> u32 {
        self.h
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn smoothing(&self) -> bool {
        self.smoothing
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Bits per offset code, `log2(2a)`.
    pub fn code_bits(&self) -> u32 {
        self.a.trailing_zeros() + 1
    }

    /// Largest step `a - 1/2` in half-level units.
    pub fn span(&self) -> i64 {
        2 * self.a as i64 - 1
    }

    pub fn partition(&self) -> PartitionParams {
        PartitionParams::new(self.q, self.m)
            .expect("validated in new")
            .with_sawtooth(true)
            .with_max_level(self.max_level)
            .expect("validated in with_max_level")
    }

    pub fn offsets(&self) -> OffsetVector {
        if self.smoothing {
            OffsetVector::curtain(self.m).expect("m >= 1")
        } else {
            OffsetVector::zeros(self.m)
        }
    }

    pub fn dartboard(&self, seed: u64) -> Dartboard {
        Dartboard::new(self.partition(), self.offsets(), seed).expect("offsets match m")
    }

    /// Size of the dartboard part of the encoding: the base height, the
    /// `m - 1` offset codes and the `h * m` window bits.
    pub fn dartboard_bits(&self) -> usize {
        bits_for(self.max_level as u64 + 2) as usize
            + (self.m - 1) * self.code_bits() as usize
            + self.h as usize * self.m
    }
}

#[inline]
fn parity(column: usize) -> i64 {
    (column & 1) as i64
}

/// Half-height of window cell `k` below a curtain at `g`.
#[inline]
fn window_height(g: i64, tension: bool, k: u32) -> i64 {
    if tension {
        g - 2 * k as i64
    } else {
        g - 2 * (k as i64 + 1)
    }
}

/// Occupancy of the cell at half-height `x` in a column described by
/// `(g, tension, word)`, ignoring whether the cell exists.
#[inline]
fn read_cell(x: i64, g: i64, tension: bool, word: u64, h: u32) -> bool {
    if x > g {
        return false;
    }
    if x == g && !tension {
        return true;
    }
    let k = if tension { (g - x) / 2 } else { (g - x) / 2 - 1 };
    if k < h as i64 {
        word >> k & 1 == 1
    } else {
        true
    }
}

#[derive(Debug, Clone)]
pub struct CurtainSketch {
    params: CurtainParams,
    board: Dartboard,
    /// Level of column 0, `-1` on the virtual floor.
    g0: i64,
    /// Code `c` at index `i - 1` encodes the step `G_i - G_{i-1} = 2c - (2a - 1)`.
    codes: PackedVector,
    /// One `h`-bit word per column; bit `k` is window cell `k`.
    bits: PackedVector,
    free: FreeMass,
    /// Lowest half-height over all columns and how many columns sit there.
    /// Darts more than a window below it cannot change the state.
    min_g: i64,
    min_count: usize,
}

impl CurtainSketch {
    pub fn new(params: CurtainParams, seed: u64) -> Self {
        let board = params.dartboard(seed);
        let floor: Vec<i64> = (0..params.m).map(|i| parity(i) - 2).collect();
        let m = params.m;
        let mut s = Self {
            codes: PackedVector::new(params.code_bits(), m - 1).expect("code width <= 16"),
            bits: PackedVector::new(params.h, m).expect("h <= 32"),
            free: FreeMass::new(vec![1.0 / m as f64; m]),
            g0: -1,
            min_g: -2,
            min_count: 0,
            params,
            board,
        };
        s.set_heights(&floor);
        s
    }

    pub fn params(&self) -> &CurtainParams {
        &self.params
    }

    pub fn board(&self) -> &Dartboard {
        &self.board
    }

    /// Level of column 0 (`-1` while on the virtual floor).
    pub fn g0(&self) -> i64 {
        self.g0
    }

    pub fn codes(&self) -> &PackedVector {
        &self.codes
    }

    /// Curtain height of column `i` in half-level units, decoded with the
    /// packed prefix sum over the offset codes.
    pub fn height_half(&self, i: usize) -> Result<i64> {
        if i >= self.params.m {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.params.m,
            });
        }
        Ok(self.height_unchecked(i))
    }

    /// Curtain height of column `i` in levels (half-integers on odd columns).
    pub fn decode_height(&self, i: usize) -> Result<f64> {
        Ok(self.height_half(i)? as f64 / 2.0)
    }

    #[inline]
    fn height_unchecked(&self, i: usize) -> i64 {
        let base = 2 * self.g0;
        if i == 0 {
            return base;
        }
        let sum = self.codes.prefix_sum_unchecked(i - 1) as i64;
        base + 2 * sum - i as i64 * self.params.span()
    }

    /// All half-heights by a sequential scan.
    pub fn heights_half(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.params.m);
        let mut g = 2 * self.g0;
        out.push(g);
        for i in 1..self.params.m {
            g += self.step(i);
            out.push(g);
        }
        out
    }

    /// `G_i - G_{i-1}` for `i >= 1`.
    #[inline]
    fn step(&self, i: usize) -> i64 {
        2 * self.codes.get(i - 1) as i64 - self.params.span()
    }

    pub fn in_tension(&self, i: usize) -> bool {
        let top = self.params.span() as u64;
        (i >= 1 && self.codes.get(i - 1) == 0)
            || (i + 1 < self.params.m && self.codes.get(i) == top)
    }

    pub fn tension_flags(&self) -> Vec<bool> {
        (0..self.params.m).map(|i| self.in_tension(i)).collect()
    }

    /// Window bits of column `i`, bit `k` for window cell `k`.
    pub fn window_word(&self, i: usize) -> u64 {
        self.bits.get(i)
    }

    pub fn is_occupied(&self, column: usize, level: u32) -> Result<bool> {
        self.board.check(DartPlacement { column, level })?;
        let x = 2 * level as i64 + parity(column);
        let g = self.height_unchecked(column);
        Ok(read_cell(
            x,
            g,
            self.in_tension(column),
            self.bits.get(column),
            self.params.h,
        ))
    }

    pub fn update(&mut self, dart: DartPlacement) -> Result<bool> {
        self.board.check(dart)?;
        Ok(self.update_unchecked(dart))
    }

    #[inline]
    fn update_unchecked(&mut self, dart: DartPlacement) -> bool {
        let i = dart.column;
        let t = 2 * dart.level as i64 + parity(i);
        if t < self.min_g - 2 * self.params.h as i64 {
            return false;
        }
        let g = self.height_unchecked(i);
        if t > g {
            self.raise(i, t, g);
            return true;
        }
        let tension = self.in_tension(i);
        let k = if tension {
            (g - t) / 2
        } else if t == g {
            return false;
        } else {
            (g - t) / 2 - 1
        };
        if k >= self.params.h as i64 {
            return false;
        }
        let word = self.bits.get(i);
        if word >> k & 1 == 1 {
            return false;
        }
        let word = word | 1 << k;
        self.bits.put(i, word);
        self.free.set(i, self.column_free(i, g, tension, word));
        true
    }

    /// Adds the cone of a dart at half-height `t` in column `i0` (currently
    /// at `g < t`) and re-derives every column whose height or tension moved.
    fn raise(&mut self, i0: usize, t: i64, g: i64) {
        let m = self.params.m;
        let span = self.params.span();
        let cone = |j: usize| t - (j as i64 - i0 as i64).abs() * span;

        // Old heights from i0 outward until the cone drops under the curtain;
        // the first column not raised is kept too, as its tension may change.
        let mut left = Vec::new();
        let mut cur = g;
        let mut j = i0;
        while j > 0 {
            let prev = cur - self.step(j);
            left.push(prev);
            if cone(j - 1) <= prev {
                break;
            }
            cur = prev;
            j -= 1;
        }
        let mut right = Vec::new();
        let mut cur = g;
        let mut j = i0;
        while j + 1 < m {
            let next = cur + self.step(j + 1);
            right.push(next);
            if cone(j + 1) <= next {
                break;
            }
            cur = next;
            j += 1;
        }

        let start = i0 - left.len();
        let end = i0 + right.len();
        let mut old_g: Vec<i64> = left.into_iter().rev().collect();
        old_g.push(g);
        old_g.extend(right);
        let new_g: Vec<i64> = (start..=end)
            .enumerate()
            .map(|(n, j)| old_g[n].max(cone(j)))
            .collect();

        // The walks stop on the first column the cone does not raise, so
        // every column whose tension can change lies in [start, end].
        let old_tension: Vec<bool> = (start..=end).map(|j| self.in_tension(j)).collect();
        let old_words: Vec<u64> = (start..=end).map(|j| self.bits.get(j)).collect();

        if start == 0 {
            self.g0 = new_g[0] / 2;
        }
        for j in start + 1..=end {
            let code = (new_g[j - start] - new_g[j - 1 - start] + span) / 2;
            self.codes.put(j - 1, code as u64);
        }

        let h = self.params.h;
        for j in start..=end {
            let n = j - start;
            let (og, ng) = (old_g[n], new_g[n]);
            let nt = self.in_tension(j);
            if og == self.min_g && ng > og {
                self.min_count -= 1;
            }
            if og == ng && nt == old_tension[n] {
                continue;
            }
            let mut word = 0u64;
            for k in 0..h {
                let x = window_height(ng, nt, k);
                if x < 0 {
                    continue;
                }
                let hit = (j == i0 && x == t) || read_cell(x, og, old_tension[n], old_words[n], h);
                if hit {
                    word |= 1 << k;
                }
            }
            self.bits.put(j, word);
            self.free.set(j, self.column_free(j, ng, nt, word));
        }
        if self.min_count == 0 {
            self.rescan_min(&self.heights_half());
        }
    }

    fn rescan_min(&mut self, heights: &[i64]) {
        self.min_g = heights.iter().copied().min().unwrap_or(0);
        self.min_count = heights.iter().filter(|&&g| g == self.min_g).count();
    }

    fn column_free(&self, j: usize, g: i64, tension: bool, word: u64) -> f64 {
        let mut f = self.board.area_above(j, g.div_euclid(2));
        for k in 0..self.params.h {
            if word >> k & 1 == 0 {
                let x = window_height(g, tension, k);
                if x >= 0 {
                    f += self.board.cell_area(j, (x / 2) as u32);
                }
            }
        }
        f
    }

    /// Overwrites the curtain with `heights` (half-level units; must be a
    /// valid curtain) and recomputes the free mass from the current bits.
    fn set_heights(&mut self, heights: &[i64]) {
        let span = self.params.span();
        self.g0 = heights[0] / 2;
        for i in 1..heights.len() {
            let code = (heights[i] - heights[i - 1] + span) / 2;
            self.codes.put(i - 1, code as u64);
        }
        self.rebuild_free();
    }

    fn rebuild_free(&mut self) {
        let heights = self.heights_half();
        self.rescan_min(&heights);
        let cols = (0..self.params.m)
            .map(|j| self.column_free(j, heights[j], self.in_tension(j), self.bits.get(j)))
            .collect();
        self.free = FreeMass::new(cols);
    }

    fn check_heights(&self, heights: &[i64]) -> Result<()> {
        let span = self.params.span();
        let top = 2 * self.params.max_level as i64 + 1;
        for (i, &g) in heights.iter().enumerate() {
            if g < parity(i) - 2 || g > top || (g - parity(i)).rem_euclid(2) != 0 {
                return Err(Error::Decode(format!("column {i} has invalid height {g}")));
            }
            if i > 0 && (g - heights[i - 1]).abs() > span {
                return Err(Error::Decode(format!("step into column {i} exceeds a - 1/2")));
            }
        }
        Ok(())
    }

    fn height_bits(&self) -> u32 {
        bits_for(self.params.max_level as u64 + 2)
    }
}

impl Sketch for CurtainSketch {
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
        let mut out = begin_blob(KIND_CURTAIN, self.board.seed());
        write_board(&mut out, &self.board);
        out.push(self.params.a.trailing_zeros() as u8);
        out.push(self.params.h as u8);
        let mut w = BitWriter::new();
        w.write((self.g0 + 1) as u64, self.height_bits());
        for c in self.codes.iter() {
            w.write(c, self.params.code_bits());
        }
        for word in self.bits.iter() {
            w.write(word, self.params.h);
        }
        debug_assert_eq!(w.bits_written(), self.params.dartboard_bits());
        out.extend(w.finish());
        finish_blob(out)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, kind, seed) = BlobReader::open(bytes)?;
        expect_kind(kind, KIND_CURTAIN)?;
        let board = r.board(seed)?;
        let log_a = r.u8()? as u32;
        let h = r.u8()? as u32;
        let p = board.params();
        if !p.sawtooth() {
            return Err(Error::Decode("curtain board must be sawtooth".into()));
        }
        if log_a > 15 {
            return Err(Error::Decode(format!("a = 2^{log_a} is too large")));
        }
        let smoothing = !board.offsets().is_zero();
        let params = CurtainParams::new(p.q(), 1 << log_a, h, p.m())?
            .with_smoothing(smoothing)
            .with_max_level(p.max_level())?;
        if params.dartboard(seed) != board {
            return Err(Error::Decode("unexpected curtain offsets".into()));
        }

        let mut s = Self::new(params, seed);
        let state = r.rest();
        if state.len() != params.dartboard_bits().div_ceil(8) {
            return Err(Error::Decode("curtain state has the wrong length".into()));
        }
        let mut bits = BitReader::new(state);
        let g0 = bits.read(s.height_bits())? as i64 - 1;
        let mut heights = vec![2 * g0];
        for i in 1..params.m {
            let c = bits.read(params.code_bits())? as i64;
            heights.push(heights[i - 1] + 2 * c - params.span());
        }
        s.check_heights(&heights)?;
        for j in 0..params.m {
            let word = bits.read(h)?;
            s.bits.put(j, word);
        }
        s.set_heights(&heights);
        Ok(s)
    }
}

impl Mergeable for CurtainSketch {
    fn merge(&self, other: &Self) -> Result<Self> {
        check_same_board(&self.board, &other.board)?;
        if self.params != other.params {
            return Err(Error::Mismatch("curtain parameters differ".into()));
        }
        let h = self.params.h;
        let (ga, gb) = (self.heights_half(), other.heights_half());
        let (ta, tb) = (self.tension_flags(), other.tension_flags());
        let heights: Vec<i64> = ga.iter().zip(&gb).map(|(x, y)| *x.max(y)).collect();

        let mut out = Self::new(self.params, self.board.seed());
        out.set_heights(&heights);
        for j in 0..self.params.m {
            let nt = out.in_tension(j);
            let (wa, wb) = (self.bits.get(j), other.bits.get(j));
            let mut word = 0u64;
            for k in 0..h {
                let x = window_height(heights[j], nt, k);
                if x >= 0
                    && (read_cell(x, ga[j], ta[j], wa, h) || read_cell(x, gb[j], tb[j], wb, h))
                {
                    word |= 1 << k;
                }
            }
            out.bits.put(j, word);
        }
        out.rebuild_free();
        Ok(out)
    }
}

impl PartialEq for CurtainSketch {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.board == other.board
            && self.g0 == other.g0
            && self.codes == other.codes
            && self.bits == other.bits
    }
}
