//! Martingale (historic inverse probability) estimator over any sketch that
//! reports its own state-change probability.
//!
//! Before each insertion the wrapper reads `P`, the inner sketch's free
//! area. If the insertion changes the inner state the estimate grows by
//! `1/P` and the retrospective variance by `(1 - P)/P^2`.
//!
//! In quantized mode the estimate lives in a [`CompactFloat14`]. After each
//! change the new value is rounded up or down to a neighbouring code with
//! probabilities that keep it unbiased, and the variance of that rounding
//! step is added to the retrospective variance. Deterministic rounding to
//! nearest would silently drop every increment smaller than half a code
//! step, which happens routinely once `λ/m` is large.

use crate::dartboard::mix64;
use crate::error::{Error, Result};
use crate::sketches::{Sketch, FLAG_MARTINGALE, FLAG_QUANTIZED};

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleSketch<S> {
    inner: S,
    estimate: f64,
    varacc: f64,
    changes: u64,
    quantized: bool,
    rounding_seed: u64,
}

impl<S: Sketch> MartingaleSketch<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            estimate: 0.0,
            varacc: 0.0,
            changes: 0,
            quantized: false,
            rounding_seed: 0,
        }
    }

    /// Keeps the estimate in a 14-bit [`CompactFloat14`] register, rounding
    /// after every change. `rounding_seed` keys the rounding decisions.
    pub fn quantized(inner: S, rounding_seed: u64) -> Self {
        Self {
            quantized: true,
            rounding_seed,
            ..Self::new(inner)
        }
    }

    #[inline]
    pub fn insert(&mut self, element: u64) -> bool {
        self.observe(|s| s.insert(element))
    }

    /// Runs an arbitrary update on the inner sketch, which must return
    /// whether the state changed. Used to feed darts directly.
    #[inline]
    pub fn observe(&mut self, update: impl FnOnce(&mut S) -> bool) -> bool {
        let p = self.inner.free_area();
        let changed = update(&mut self.inner);
        if changed {
            self.estimate += 1.0 / p;
            self.varacc += (1.0 - p) / (p * p);
            self.changes += 1;
            if self.quantized {
                let u = mix64(self.rounding_seed ^ mix64(self.changes));
                let (x, var) = CompactFloat14::round_unbiased(self.estimate, u);
                self.estimate = x.decode();
                self.varacc += var;
            }
        }
        changed
    }

    pub fn estimate(&self) -> f64 {
        self.estimate
    }

    /// Retrospective variance: an unbiased estimate of the variance of
    /// [`MartingaleSketch::estimate`].
    pub fn variance_estimate(&self) -> f64 {
        self.varacc
    }

    /// Number of insertions that changed the inner state.
    pub fn changes(&self) -> u64 {
        self.changes
    }

    pub fn is_quantized(&self) -> bool {
        self.quantized
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn into_inner(self) -> S {
        self.inner
    }

    /// Inner encoding with the martingale flag set and the estimate and
    /// retrospective variance appended as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.inner.to_bytes();
        out[8] |= FLAG_MARTINGALE;
        if self.quantized {
            out[8] |= FLAG_QUANTIZED;
        }
        out.extend_from_slice(&self.estimate.to_le_bytes());
        out.extend_from_slice(&self.varacc.to_le_bytes());
        let n = (out.len() - 4) as u32;
        out[..4].copy_from_slice(&n.to_le_bytes());
        out
    }

    /// The change counter and rounding seed are not serialized; both
    /// restart at 0.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 9 + 16 {
            return Err(Error::Decode("martingale blob too short".into()));
        }
        let kind = bytes[8];
        if kind & FLAG_MARTINGALE == 0 {
            return Err(Error::Decode("blob has no martingale flag".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 16);
        let mut inner = body.to_vec();
        inner[8] &= !(FLAG_MARTINGALE | FLAG_QUANTIZED);
        let n = (inner.len() - 4) as u32;
        inner[..4].copy_from_slice(&n.to_le_bytes());
        let estimate = f64::from_le_bytes(tail[..8].try_into().unwrap());
        let varacc = f64::from_le_bytes(tail[8..].try_into().unwrap());
        if !(estimate >= 0.0 && varacc >= 0.0) {
            return Err(Error::Decode("negative or NaN estimate".into()));
        }
        Ok(Self {
            inner: S::from_bytes(&inner)?,
            estimate,
            varacc,
            changes: 0,
            quantized: kind & FLAG_QUANTIZED != 0,
            rounding_seed: 0,
        })
    }
}

/// 14-bit non-negative float: 6-bit exponent `e`, 8-bit mantissa `f`.
///
/// `e = 0` encodes `f/256`; `e >= 1` encodes `2^(e-1) * (1 + f/256)`.
/// Encoding rounds to nearest and saturates at the largest value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompactFloat14(u16);

impl CompactFloat14 {
    pub const BITS: u32 = 14;
    pub const MAX: CompactFloat14 = CompactFloat14((1 << 14) - 1);

    pub fn encode(x: f64) -> Self {
        if !(x > 0.0) {
            return Self(0);
        }
        if x < 1.0 {
            // f == 256 rolls over into (e = 1, f = 0), which is exactly 1.0
            return Self((x * 256.0).round() as u16);
        }
        if x >= Self::MAX.decode() {
            return Self::MAX;
        }
        let exp = ((x.to_bits() >> 52) & 0x7ff) as i64 - 1023;
        let frac = x / (exp as f64).exp2() - 1.0;
        let mut e = exp + 1;
        let mut f = (frac * 256.0).round() as i64;
        if f == 256 {
            e += 1;
            f = 0;
        }
        if e > 63 {
            return Self::MAX;
        }
        Self(((e as u16) << 8) | f as u16)
    }

    /// Codes `(lo, hi)` with `lo.decode() <= x <= hi.decode()` and nothing
    /// representable strictly between them. Above the largest value both
    /// are [`CompactFloat14::MAX`].
    pub fn bracket(x: f64) -> (Self, Self) {
        let near = Self::encode(x);
        let v = near.decode();
        if v == x || near == Self::MAX && x > v {
            (near, near)
        } else if v > x {
            (Self(near.0 - 1), near)
        } else {
            (near, Self(near.0 + 1))
        }
    }

    /// Rounds `x` to one of its two bracketing codes so that the expected
    /// decoded value is `x`, using the top 53 bits of `random` as the
    /// uniform draw. Returns the code and the variance of the rounding,
    /// `(x - lo)(hi - x)`. Values beyond the range saturate with variance 0.
    pub fn round_unbiased(x: f64, random: u64) -> (Self, f64) {
        let (lo, hi) = Self::bracket(x);
        if lo == hi {
            return (lo, 0.0);
        }
        let (a, b) = (lo.decode(), hi.decode());
        let u = (random >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let up = u < (x - a) / (b - a);
        (if up { hi } else { lo }, (x - a) * (b - x))
    }

    pub fn decode(self) -> f64 {
        let e = (self.0 >> 8) as i32;
        let f = (self.0 & 0xff) as f64;
        if e == 0 {
            f / 256.0
        } else {
            f64::from(e - 1).exp2() * (1.0 + f / 256.0)
        }
    }

    pub fn to_bits(self) -> u16 {
        self.0
    }

    pub fn from_bits(bits: u16) -> Result<Self> {
        if bits >> Self::BITS != 0 {
            return Err(Error::Decode(format!("{bits:#x} does not fit in 14 bits")));
        }
        Ok(Self(bits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dartboard::{Dartboard, OffsetVector, PartitionParams};
    use crate::sketches::{LogLogSketch, PcsaSketch};

    fn pcsa(q: f64, m: usize, seed: u64) -> PcsaSketch {
        let p = PartitionParams::new(q, m).unwrap();
        PcsaSketch::new(Dartboard::new(p, OffsetVector::zeros(m), seed).unwrap())
    }

    #[test]
    fn first_insert_and_duplicates() {
        let mut s = MartingaleSketch::new(pcsa(2.0, 4, 1));
        assert_eq!(s.estimate(), 0.0);
        assert_eq!(s.variance_estimate(), 0.0);
        assert!(s.insert(77));
        assert_eq!(s.estimate(), 1.0);
        assert_eq!(s.variance_estimate(), 0.0);
        assert!(!s.insert(77));
        assert_eq!(s.estimate(), 1.0);
        assert_eq!(s.changes(), 1);
    }

    #[test]
    fn estimates_never_decrease() {
        let mut s = MartingaleSketch::quantized(pcsa(2.91, 8, 2), 1);
        let (mut e, mut v) = (0.0, 0.0);
        for x in 0..10_000 {
            s.insert(x);
            assert!(s.estimate() >= e && s.variance_estimate() >= v);
            e = s.estimate();
            v = s.variance_estimate();
        }
    }

    #[test]
    fn bytes_roundtrip() {
        let p = PartitionParams::new(2.0, 16).unwrap();
        let board = Dartboard::new(p, OffsetVector::zeros(16), 3).unwrap();
        let mut s = MartingaleSketch::quantized(LogLogSketch::new(board), 5);
        for x in 0..1000 {
            s.insert(x);
        }
        let back = MartingaleSketch::<LogLogSketch>::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(back.estimate(), s.estimate());
        assert_eq!(back.variance_estimate(), s.variance_estimate());
        assert_eq!(back.inner(), s.inner());
        assert!(back.is_quantized());
        assert!(LogLogSketch::from_bytes(&s.to_bytes()).is_err());
        assert!(MartingaleSketch::<LogLogSketch>::from_bytes(&s.inner().to_bytes()).is_err());
    }

    #[test]
    fn cf14_examples() {
        assert_eq!(CompactFloat14::encode(0.0).to_bits(), 0);
        assert_eq!(CompactFloat14::encode(0.0).decode(), 0.0);
        assert_eq!(CompactFloat14::encode(1.0).decode(), 1.0);
        assert_eq!(CompactFloat14::encode(1e300), CompactFloat14::MAX);
        assert_eq!(CompactFloat14::encode(-3.0).decode(), 0.0);
        assert_eq!(CompactFloat14::encode(0.999).decode(), 1.0);
        assert_eq!(CompactFloat14::encode(2.0f64.powi(40)).decode(), 2.0f64.powi(40));
        assert!(CompactFloat14::from_bits(1 << 14).is_err());
    }

    #[test]
    fn unbiased_rounding() {
        assert_eq!(CompactFloat14::bracket(3.0), (CompactFloat14::encode(3.0), CompactFloat14::encode(3.0)));
        let x = 1000.3;
        let (lo, hi) = CompactFloat14::bracket(x);
        assert_eq!((lo.decode(), hi.decode()), (1000.0, 1002.0));
        // Averaging over an even grid of draws recovers x.
        let n = 1u64 << 16;
        let mean: f64 = (0..n)
            .map(|i| CompactFloat14::round_unbiased(x, i << 48).0.decode())
            .sum::<f64>()
            / n as f64;
        assert!((mean - x).abs() < 1e-3, "{mean}");
        let (_, var) = CompactFloat14::round_unbiased(x, 0);
        assert!((var - 0.3 * 1.7).abs() < 1e-9);
        assert_eq!(CompactFloat14::round_unbiased(1e300, 7), (CompactFloat14::MAX, 0.0));
    }

    #[test]
    fn cf14_error_and_monotonicity() {
        let mut prev = 0.0;
        for bits in 0..(1u16 << 14) {
            let v = CompactFloat14(bits).decode();
            assert!(v > prev || bits == 0);
            assert_eq!(CompactFloat14::encode(v).to_bits(), bits);
            prev = v;
        }
        let mut x = 1.0f64;
        while x < 2f64.powi(60) {
            let y = CompactFloat14::encode(x).decode();
            assert!(((y - x) / x).abs() <= 2f64.powi(-8), "{x}");
            x *= 1.0137;
        }
    }
}
