//! Fixed-width unsigned integers packed into 64-bit words, with a
//! word-parallel prefix sum.
//!
//! Each word holds `floor(64 / t)` fields of `t` bits, least significant
//! field first; a field never straddles a word boundary. When `t` divides 64
//! this is exactly `ceil(t * len / 64)` words.

use crate::error::{Error, Result};

const WORD_BITS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedVector {
    width: u32,
    len: usize,
    per_word: usize,
    words: Vec<u64>,
}

impl PackedVector {
    /// `width` may be 0, in which case every entry is 0 and nothing is stored.
    pub fn new(width: u32, len: usize) -> Result<Self> {
        if width > 32 {
            return Err(Error::InvalidParams(format!(
                "packed field width must be at most 32 bits, got {width}"
            )));
        }
        let per_word = if width == 0 {
            usize::MAX
        } else {
            (WORD_BITS / width) as usize
        };
        let words = if width == 0 { 0 } else { len.div_ceil(per_word) };
        Ok(Self {
            width,
            len,
            per_word,
            words: vec![0; words],
        })
    }

    pub fn from_values(width: u32, values: &[u64]) -> Result<Self> {
        let mut v = Self::new(width, values.len())?;
        for (i, &x) in values.iter().enumerate() {
            v.set(i, x)?;
        }
        Ok(v)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    fn field_mask(&self) -> u64 {
        if self.width == 0 {
            0
        } else {
            (1u64 << self.width) - 1
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> u64 {
        debug_assert!(i < self.len);
        if self.width == 0 {
            return 0;
        }
        let shift = (i % self.per_word) as u32 * self.width;
        (self.words[i / self.per_word] >> shift) & self.field_mask()
    }

    pub fn set(&mut self, i: usize, value: u64) -> Result<()> {
        if i >= self.len {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len,
            });
        }
        if value > self.field_mask() {
            return Err(Error::InvalidParams(format!(
                "value {value} does not fit in {} bits",
                self.width
            )));
        }
        self.put(i, value);
        Ok(())
    }

    /// Unchecked store for callers that already validated `i` and `value`.
    #[inline]
    pub(crate) fn put(&mut self, i: usize, value: u64) {
        if self.width == 0 {
            return;
        }
        let shift = (i % self.per_word) as u32 * self.width;
        let mask = self.field_mask() << shift;
        let w = &mut self.words[i / self.per_word];
        *w = (*w & !mask) | (value << shift);
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// `sum_{j <= i} x_j`.
    pub fn prefix_sum(&self, i: usize) -> Result<u64> {
        if i >= self.len {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len,
            });
        }
        Ok(self.prefix_sum_unchecked(i))
    }

    /// Word-parallel prefix sum. Every word is halved twice in place
    /// (odd fields masked out and added onto even fields), more if the lanes
    /// would otherwise overflow; the partially reduced words are then added
    /// together lane-wise and the accumulator is halved down to a single lane.
    #[inline]
    pub(crate) fn prefix_sum_unchecked(&self, i: usize) -> u64 {
        if self.width == 0 {
            return 0;
        }
        let t = self.width;
        let count = i + 1;
        let full = count / self.per_word;
        let rest = count % self.per_word;
        let nwords = full + usize::from(rest > 0);

        // Lanes start t bits wide; after s halvings a lane is t * 2^s bits and
        // holds a sum of up to 2^s fields. Folding n words multiplies by n.
        let field_max = (1u64 << t) - 1;
        let mut halvings = 0u32;
        let mut lane = t;
        while lane < WORD_BITS {
            if halvings >= 2 && self.lanes_fit(lane, halvings, field_max, nwords) {
                break;
            }
            halvings += 1;
            lane *= 2;
        }

        let mut acc = 0u64;
        for (k, &word) in self.words[..nwords].iter().enumerate() {
            let mut x = word;
            if k == full {
                x &= (1u64 << (rest as u32 * t)) - 1;
            }
            let mut w = t;
            for _ in 0..halvings {
                x = halve(x, w);
                w *= 2;
            }
            acc = acc.wrapping_add(x);
        }
        let mut w = lane;
        while w < WORD_BITS {
            acc = halve(acc, w);
            w *= 2;
        }
        acc
    }

    /// Whether `nwords` words reduced to lanes of `lane` bits can be added
    /// lane-wise without carries crossing lanes. When `t` does not divide 64
    /// the top lane is truncated at the word boundary and gets its own check.
    fn lanes_fit(&self, lane: u32, halvings: u32, field_max: u64, nwords: usize) -> bool {
        let n = nwords as u128;
        let full_bound = (field_max as u128) << halvings;
        if full_bound * n >= 1u128 << lane {
            return false;
        }
        let lanes_per_word = WORD_BITS.div_ceil(lane);
        let top_pos = (lanes_per_word - 1) * lane;
        let top_cap = WORD_BITS - top_pos;
        let fields_before = (lanes_per_word as usize - 1) << halvings;
        let top_fields = self.per_word.saturating_sub(fields_before) as u128;
        top_fields * field_max as u128 * n < 1u128 << top_cap
    }

    /// Plain scalar loop; used to cross-check [`PackedVector::prefix_sum`].
    pub fn prefix_sum_scalar(&self, i: usize) -> u64 {
        (0..=i).map(|j| self.get(j)).sum()
    }
}

/// Mask selecting lanes `0, 2, 4, ...` of width `w` (lanes at stride `2w`).
#[inline]
fn even_lanes(w: u32) -> u64 {
    let lane = if w >= 64 { u64::MAX } else { (1u64 << w) - 1 };
    let mut mask = 0u64;
    let mut pos = 0u32;
    while pos < WORD_BITS {
        mask |= lane << pos;
        pos += 2 * w;
    }
    mask
}

#[inline]
fn halve(x: u64, w: u32) -> u64 {
    let m = even_lanes(w);
    (x & m) + ((x >> w) & m)
}

/// Little-endian bit stream writer for serialized layouts.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, value: u64, bits: u32) {
        for b in 0..bits {
            if self.bit % 8 == 0 {
                self.bytes.push(0);
            }
            if (value >> b) & 1 == 1 {
                let last = self.bytes.len() - 1;
                self.bytes[last] |= 1 << (self.bit % 8);
            }
            self.bit += 1;
        }
    }

    pub fn bits_written(&self) -> usize {
        self.bit
    }

    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    bit: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, bit: 0 }
    }

    pub fn read(&mut self, bits: u32) -> Result<u64> {
        let mut v = 0u64;
        for b in 0..bits {
            let byte = self
                .bytes
                .get(self.bit / 8)
                .ok_or_else(|| Error::Decode("bit stream truncated".into()))?;
            if (byte >> (self.bit % 8)) & 1 == 1 {
                v |= 1 << b;
            }
            self.bit += 1;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_vector_sums_to_zero() {
        let v = PackedVector::new(2, 100).unwrap();
        for i in 0..100 {
            assert_eq!(v.prefix_sum(i).unwrap(), 0);
        }
    }

    #[test]
    fn eight_ones() {
        let v = PackedVector::from_values(2, &[1; 8]).unwrap();
        assert_eq!(v.prefix_sum(7).unwrap(), 8);
        assert_eq!(v.prefix_sum(0).unwrap(), 1);
    }

    #[test]
    fn saturated_fields_across_many_words() {
        for t in [1, 2, 3, 5, 8, 13, 32] {
            let max = (1u64 << t) - 1;
            let v = PackedVector::from_values(t, &vec![max; 1500]).unwrap();
            for i in [0, 1, 20, 63, 64, 700, 1499] {
                assert_eq!(v.prefix_sum(i).unwrap(), max * (i as u64 + 1), "t={t} i={i}");
            }
        }
    }

    #[test]
    fn out_of_range() {
        let mut v = PackedVector::new(2, 4).unwrap();
        assert!(v.prefix_sum(4).is_err());
        assert!(v.set(4, 1).is_err());
        assert!(v.set(0, 4).is_err());
        assert!(PackedVector::new(33, 1).is_err());
    }

    #[test]
    fn zero_width() {
        let v = PackedVector::new(0, 10).unwrap();
        assert!(v.words().is_empty());
        assert_eq!(v.prefix_sum(9).unwrap(), 0);
    }

    #[test]
    fn bit_stream_roundtrip() {
        let mut w = BitWriter::new();
        w.write(5, 3);
        w.write(0xabcd, 16);
        w.write(1, 1);
        assert_eq!(w.bits_written(), 20);
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        assert_eq!(r.read(3).unwrap(), 5);
        assert_eq!(r.read(16).unwrap(), 0xabcd);
        assert_eq!(r.read(1).unwrap(), 1);
        assert!(r.read(8).is_err());
    }

    proptest! {
        #[test]
        fn prefix_sum_matches_scalar(
            t in 1u32..=12,
            raw in proptest::collection::vec(any::<u64>(), 1..600),
            pick in any::<prop::sample::Index>(),
        ) {
            let mask = (1u64 << t) - 1;
            let values: Vec<u64> = raw.iter().map(|x| x & mask).collect();
            let v = PackedVector::from_values(t, &values).unwrap();
            prop_assert_eq!(v.iter().collect::<Vec<_>>(), values.clone());
            let i = pick.index(values.len());
            prop_assert_eq!(v.prefix_sum(i).unwrap(), values[..=i].iter().sum::<u64>());
        }
    }
}
