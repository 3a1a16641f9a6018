use crate::dartboard::ElementHasher;
use crate::error::{invalid, Error, Result};

use super::{begin_blob, expect_kind, finish_blob, BlobReader, FreeMass, Mergeable, Sketch, KIND_MINCOUNT};

/// (k,m)-MinCount: each of `m` buckets keeps the `k` smallest distinct hash
/// reals routed to it.
#[derive(Debug, Clone)]
pub struct MinCountSketch {
    m: usize,
    k: usize,
    hasher: ElementHasher,
    buckets: Vec<Vec<f64>>,
    free: FreeMass,
}

impl MinCountSketch {
    pub fn new(m: usize, k: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(invalid("bucket count m must be at least 1"));
        }
        if k == 0 || k > 255 {
            return Err(invalid(format!("k must lie in [1, 255], got {k}")));
        }
        Ok(Self {
            m,
            k,
            hasher: ElementHasher::new(seed),
            buckets: vec![Vec::with_capacity(k); m],
            free: FreeMass::new(vec![1.0 / m as f64; m]),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.hasher.seed()
    }

    /// Sorted contents of `bucket`.
    pub fn bucket(&self, bucket: usize) -> &[f64] {
        &self.buckets[bucket]
    }

    pub fn update(&mut self, bucket: usize, hashreal: f64) -> Result<bool> {
        if bucket >= self.m {
            return Err(Error::IndexOutOfRange {
                index: bucket,
                len: self.m,
            });
        }
        if !(hashreal > 0.0 && hashreal <= 1.0) {
            return Err(Error::HashOutOfRange(hashreal));
        }
        Ok(self.update_unchecked(bucket, hashreal))
    }

    #[inline]
    fn update_unchecked(&mut self, bucket: usize, x: f64) -> bool {
        let k = self.k;
        let b = &mut self.buckets[bucket];
        if b.len() == k && x >= b[k - 1] {
            return false;
        }
        let pos = match b.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(_) => return false,
            Err(p) => p,
        };
        if b.len() == k {
            b.pop();
        }
        b.insert(pos, x);
        let v = self.bucket_free(bucket);
        self.free.set(bucket, v);
        true
    }

    fn bucket_free(&self, bucket: usize) -> f64 {
        let b = &self.buckets[bucket];
        let kth = if b.len() == self.k { b[self.k - 1] } else { 1.0 };
        kth / self.m as f64
    }

    fn rebuild_free(&mut self) {
        self.free = FreeMass::new((0..self.m).map(|j| self.bucket_free(j)).collect());
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let (mut r, kind, seed) = BlobReader::open(bytes)?;
        expect_kind(kind, KIND_MINCOUNT)?;
        let m = r.u32()? as usize;
        let k = r.u32()? as usize;
        let mut s = Self::new(m, k, seed)?;
        s.decode_buckets(&mut r)?;
        Ok(s)
    }

    fn decode_buckets(&mut self, r: &mut BlobReader<'_>) -> Result<()> {
        for j in 0..self.m {
            let n = r.u8()? as usize;
            if n > self.k {
                return Err(Error::Decode(format!("bucket {j} holds {n} > k values")));
            }
            let mut prev = 0.0;
            for _ in 0..n {
                let x = r.f64()?;
                if !(x > prev && x <= 1.0) {
                    return Err(Error::Decode(format!("bucket {j} is not sorted in (0, 1]")));
                }
                self.buckets[j].push(x);
                prev = x;
            }
        }
        self.rebuild_free();
        Ok(())
    }

    fn header(&self, kind: u8) -> Vec<u8> {
        let mut out = begin_blob(kind, self.seed());
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        for b in &self.buckets {
            out.push(b.len() as u8);
            for x in b {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }
}

impl Sketch for MinCountSketch {
    #[inline]
    fn insert(&mut self, element: u64) -> bool {
        let bucket = self.hasher.column(element, self.m);
        let x = self.hasher.uniform(element);
        self.update_unchecked(bucket, x)
    }

    #[inline]
    fn free_area(&self) -> f64 {
        self.free.total()
    }

    fn to_bytes(&self) -> Vec<u8> {
        finish_blob(self.header(KIND_MINCOUNT))
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::decode(bytes)
    }
}

impl Mergeable for MinCountSketch {
    fn merge(&self, other: &Self) -> Result<Self> {
        if (self.m, self.k, self.seed()) != (other.m, other.k, other.seed()) {
            return Err(Error::Mismatch(
                "MinCount sketches differ in m, k or hash seed".into(),
            ));
        }
        let mut out = self.clone();
        for (a, b) in out.buckets.iter_mut().zip(&other.buckets) {
            a.extend_from_slice(b);
            a.sort_by(f64::total_cmp);
            a.dedup();
            a.truncate(self.k);
        }
        out.rebuild_free();
        Ok(out)
    }
}

impl PartialEq for MinCountSketch {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
            && self.k == other.k
            && self.hasher == other.hasher
            && self.buckets == other.buckets
    }
}
