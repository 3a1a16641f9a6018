//! Cell geometry of the dartboard and the hash-to-dart mapping.
//!
//! The unit square is split into `m` equal-width columns. Within column `i`
//! the cell at level `k` covers the vertical interval
//! `[q^-(k+1+s_i), q^-(k+s_i))`, where `s_i` is the column shift: the
//! smoothing offset `r_i` plus, on a sawtooth board, a half step for odd
//! columns. Level 0 additionally absorbs everything above it (up to 1) and
//! level `max_level` absorbs everything below it, so every column carries
//! exactly `1/m` of the mass.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Heights at or above this level are clamped.
pub const DEFAULT_MAX_LEVEL: u32 = 64;

/// Largest supported `max_level`; PCSA stores one column in a `u128`.
pub const MAX_SUPPORTED_LEVEL: u32 = 126;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionParams {
    q: f64,
    m: usize,
    sawtooth: bool,
    max_level: u32,
}

impl PartitionParams {
    pub fn new(q: f64, m: usize) -> Result<Self> {
        if !(q.is_finite() && q > 1.0) {
            return Err(invalid(format!("base q must be a finite real > 1, got {q}")));
        }
        if m == 0 {
            return Err(invalid("column count m must be at least 1"));
        }
        Ok(Self {
            q,
            m,
            sawtooth: false,
            max_level: DEFAULT_MAX_LEVEL,
        })
    }

    pub fn with_sawtooth(mut self, sawtooth: bool) -> Self {
        self.sawtooth = sawtooth;
        self
    }

    pub fn with_max_level(mut self, max_level: u32) -> Result<Self> {
        if max_level == 0 || max_level > MAX_SUPPORTED_LEVEL {
            return Err(invalid(format!(
                "max_level must lie in [1, {MAX_SUPPORTED_LEVEL}], got {max_level}"
            )));
        }
        self.max_level = max_level;
        Ok(self)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sawtooth(&self) -> bool {
        self.sawtooth
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Sawtooth half step of column `i` (1/2 for odd columns on a sawtooth board).
    pub fn half_step(&self, column: usize) -> f64 {
        if self.sawtooth && column % 2 == 1 {
            0.5
        } else {
            0.0
        }
    }
}

/// Per-column smoothing offsets `r_i`, each in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetVector(Vec<f64>);

impl OffsetVector {
    pub fn new(offsets: Vec<f64>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(invalid("offset vector must not be empty"));
        }
        if let Some(bad) = offsets.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(invalid(format!("offset {bad} outside [0, 1)")));
        }
        Ok(Self(offsets))
    }

    /// No smoothing.
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m.max(1)])
    }

    /// `(0, 1/m, 2/m, ..., (m-1)/m)`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("column count m must be at least 1"));
        }
        Ok(Self((0..m).map(|i| i as f64 / m as f64).collect()))
    }

    /// Smoothing component for a sawtooth board: column `i` gets
    /// `floor(i/2)/m`, so pairs of neighbouring columns share an offset.
    /// Combined with the built-in half step this yields
    /// `(0, 1/2, 1/m, 1/2+1/m, 2/m, ..., 1/2-1/m, 1-1/m)` for even `m`.
    pub fn curtain(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("column count m must be at least 1"));
        }
        Ok(Self((0..m).map(|i| (i / 2) as f64 / m as f64).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&r| r == 0.0)
    }
}

/// Offset plus sawtooth half step, per column.
pub fn combined_offsets(params: &PartitionParams, offsets: &OffsetVector) -> Vec<f64> {
    offsets
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, r)| r + params.half_step(i))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DartPlacement {
    pub column: usize,
    pub level: u32,
}

/// 64-bit finalizer with full avalanche (splitmix64 / Stafford mix 13).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed hash of an element to a column index in `[0, m)` and a uniform
/// real in `(0, 1]` built from 53 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementHasher {
    seed: u64,
    column_key: u64,
    height_key: u64,
}

impl ElementHasher {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            column_key: mix64(seed ^ 0x6a09_e667_f3bc_c908),
            height_key: mix64(seed ^ 0xbb67_ae85_84ca_a73b),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn column(&self, element: u64, m: usize) -> usize {
        let h = mix64(element.wrapping_add(self.column_key));
        ((h as u128 * m as u128) >> 64) as usize
    }

    #[inline]
    pub fn uniform(&self, element: u64) -> f64 {
        let h = mix64(element.wrapping_add(self.height_key) ^ 0x3c6e_f372_fe94_f82b);
        ((h >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// A partitioned board bound to a hash seed: everything needed to turn
/// elements into darts and to measure cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Dartboard {
    params: PartitionParams,
    offsets: OffsetVector,
    hasher: ElementHasher,
    shift: Vec<f64>,
    inv_ln_q: f64,
}

impl Dartboard {
    pub fn new(params: PartitionParams, offsets: OffsetVector, seed: u64) -> Result<Self> {
        if offsets.len() != params.m() {
            return Err(invalid(format!(
                "offset vector has {} entries but the board has {} columns",
                offsets.len(),
                params.m()
            )));
        }
        let shift = combined_offsets(&params, &offsets);
        Ok(Self {
            inv_ln_q: 1.0 / params.q().ln(),
            params,
            offsets,
            hasher: ElementHasher::new(seed),
            shift,
        })
    }

    pub fn params(&self) -> &PartitionParams {
        &self.params
    }

    pub fn offsets(&self) -> &OffsetVector {
        &self.offsets
    }

    pub fn seed(&self) -> u64 {
        self.hasher.seed()
    }

    pub fn m(&self) -> usize {
        self.params.m()
    }

    pub fn max_level(&self) -> u32 {
        self.params.max_level()
    }

    /// Column shift `r_i + ι_i`.
    pub fn shift(&self, column: usize) -> f64 {
        self.shift[column]
    }

    /// Same board (geometry and hash seed) as `other`.
    pub fn compatible(&self, other: &Dartboard) -> bool {
        self == other
    }

    #[inline]
    pub fn throw(&self, element: u64) -> DartPlacement {
        let column = self.hasher.column(element, self.params.m());
        let u = self.hasher.uniform(element);
        DartPlacement {
            column,
            level: self.level_of(column, u),
        }
    }

    /// Level of the cell in `column` containing height `u`. Intervals are
    /// half-open, `[q^-(k+1+s), q^-(k+s))`, so level = ceil(x) - 1 with
    /// `x = -log_q(u) - s`.
    #[inline]
    pub fn level_of(&self, column: usize, u: f64) -> u32 {
        let x = -u.ln() * self.inv_ln_q - self.shift[column];
        if x <= 1.0 {
            return 0;
        }
        let level = x.ceil() - 1.0;
        if level >= self.params.max_level() as f64 {
            self.params.max_level()
        } else {
            level as u32
        }
    }

    pub fn check(&self, dart: DartPlacement) -> Result<()> {
        if dart.column >= self.params.m() || dart.level > self.params.max_level() {
            return Err(Error::DartOutOfRange {
                column: dart.column,
                level: dart.level,
                columns: self.params.m(),
                max_level: self.params.max_level(),
            });
        }
        Ok(())
    }

    /// Probability mass of cell `(level, column)`.
    pub fn cell_area(&self, column: usize, level: u32) -> f64 {
        let m = self.params.m() as f64;
        let q = self.params.q();
        let s = self.shift[column];
        let top = self.params.max_level();
        if level > top {
            0.0
        } else if level == 0 {
            (1.0 - q.powf(-(1.0 + s))) / m
        } else if level == top {
            q.powf(-(top as f64 + s)) / m
        } else {
            q.powf(-(level as f64 + s)) * (1.0 - 1.0 / q) / m
        }
    }

    /// Mass of all cells in `column` strictly above `level` (i.e. with a
    /// larger level index). `level = -1` gives the whole column.
    pub fn area_above(&self, column: usize, level: i64) -> f64 {
        let m = self.params.m() as f64;
        if level < 0 {
            1.0 / m
        } else if level >= self.params.max_level() as i64 {
            0.0
        } else {
            self.params.q().powf(-(level as f64 + 1.0 + self.shift[column])) / m
        }
    }
}

/// Standalone form of [`Dartboard::throw`].
pub fn hash_to_dart(
    element: u64,
    params: &PartitionParams,
    offsets: &OffsetVector,
    seed: u64,
) -> Result<DartPlacement> {
    Ok(Dartboard::new(*params, offsets.clone(), seed)?.throw(element))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn board(q: f64, m: usize, r: Vec<f64>) -> Dartboard {
        let p = PartitionParams::new(q, m).unwrap();
        Dartboard::new(p, OffsetVector::new(r).unwrap(), 1).unwrap()
    }

    #[test]
    fn uniform_offsets() {
        assert_eq!(OffsetVector::uniform(1).unwrap().as_slice(), &[0.0]);
        assert_eq!(OffsetVector::uniform(2).unwrap().as_slice(), &[0.0, 0.5]);
        assert_eq!(
            OffsetVector::uniform(4).unwrap().as_slice(),
            &[0.0, 0.25, 0.5, 0.75]
        );
    }

    #[test]
    fn curtain_offsets_combine_to_interleaved_vector() {
        let combined = |m: usize| {
            let p = PartitionParams::new(2.0, m).unwrap().with_sawtooth(true);
            combined_offsets(&p, &OffsetVector::curtain(m).unwrap())
        };
        assert_eq!(combined(2), vec![0.0, 0.5]);
        assert_eq!(combined(4), vec![0.0, 0.5, 0.25, 0.75]);
        let six = combined(6);
        let expect = [0.0, 0.5, 1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0, 5.0 / 6.0];
        for (a, b) in six.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{six:?}");
        }
        assert_eq!(OffsetVector::curtain(3).unwrap().as_slice(), &[0.0, 0.0, 1.0 / 3.0]);
        assert!(OffsetVector::curtain(0).is_err());
    }

    #[test]
    fn level_from_uniform() {
        let b = board(2.0, 1, vec![0.0]);
        assert_eq!(b.level_of(0, 0.6), 0);
        assert_eq!(b.level_of(0, 0.3), 1);
        assert_eq!(b.level_of(0, 1.0), 0);
        // half-open: 2^-1 belongs to level 0
        assert_eq!(b.level_of(0, 0.5), 0);
        let shifted = board(2.0, 1, vec![0.5]);
        // 2^-2.5 <= 0.3 < 2^-1.5
        assert_eq!(shifted.level_of(0, 0.3), 1);
    }

    #[test]
    fn level_clamps_at_cap() {
        let p = PartitionParams::new(2.0, 1).unwrap().with_max_level(3).unwrap();
        let b = Dartboard::new(p, OffsetVector::zeros(1), 0).unwrap();
        assert_eq!(b.level_of(0, 1e-9), 3);
        assert_eq!(b.level_of(0, 0.124), 3);
        assert_eq!(b.level_of(0, 0.126), 2);
    }

    #[test]
    fn cell_areas() {
        assert_eq!(board(2.0, 1, vec![0.0]).cell_area(0, 0), 0.5);
        assert_eq!(board(2.0, 2, vec![0.0, 0.0]).cell_area(0, 1), 0.125);
        let b = board(2.0, 3, vec![0.0, 0.3, 0.9]);
        for c in 0..3 {
            let total: f64 = (0..=b.max_level()).map(|l| b.cell_area(c, l)).sum();
            assert!((total - 1.0 / 3.0).abs() < 1e-15);
            for l in 0..b.max_level() {
                let above: f64 = (l + 1..=b.max_level()).map(|k| b.cell_area(c, k)).sum();
                assert!((above - b.area_above(c, l as i64)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn throw_is_deterministic_and_in_range() {
        let b = board(2.91, 7, vec![0.0; 7]);
        for e in 0..1000u64 {
            let d = b.throw(e);
            assert_eq!(d, b.throw(e));
            assert!(d.column < 7 && d.level <= b.max_level());
        }
        let other = board(2.91, 7, vec![0.0; 7]);
        assert_eq!(b.throw(42), other.throw(42));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(PartitionParams::new(1.0, 4).is_err());
        assert!(PartitionParams::new(f64::NAN, 4).is_err());
        assert!(PartitionParams::new(2.0, 0).is_err());
        assert!(PartitionParams::new(2.0, 1).unwrap().with_max_level(0).is_err());
        assert!(OffsetVector::new(vec![1.0]).is_err());
        let p = PartitionParams::new(2.0, 2).unwrap();
        assert!(Dartboard::new(p, OffsetVector::zeros(3), 0).is_err());
    }
}
