//! Bit-packed binary hypervectors.
//!
//! Bit `k` of a vector lives in bit `k % 64` of word `k / 64`; words are
//! little-endian when serialized. Bits past `dim` in the last word are kept
//! zero so that word-level popcounts never need masking.

use std::fmt;

use rand::RngCore;

use super::HdError;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

pub(crate) fn words_for(dim: usize) -> usize {
    dim.div_ceil(64)
}

fn tail_mask(dim: usize) -> u64 {
    match dim % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

impl Hypervector {
    pub fn zeros(dim: usize) -> Result<Self, HdError> {
        if dim == 0 {
            return Err(HdError::InvalidDimension);
        }
        Ok(Self { dim, words: vec![0; words_for(dim)] })
    }

    /// Each bit is an independent fair coin drawn from `rng`.
    pub fn random<R: RngCore + ?Sized>(dim: usize, rng: &mut R) -> Result<Self, HdError> {
        let mut hv = Self::zeros(dim)?;
        for w in hv.words.iter_mut() {
            *w = rng.next_u64();
        }
        hv.clear_tail();
        Ok(hv)
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self, HdError> {
        let mut hv = Self::zeros(bits.len())?;
        for (k, &b) in bits.iter().enumerate() {
            hv.set(k, b);
        }
        Ok(hv)
    }

    /// Parses a string of `0`/`1` characters; character `k` is bit `k`.
    pub fn from_bit_str(s: &str) -> Result<Self, HdError> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(HdError::InvalidBitChar(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_bits(&bits)
    }

    /// Rebuilds a vector from packed words; trailing bits must be zero.
    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self, HdError> {
        if dim == 0 {
            return Err(HdError::InvalidDimension);
        }
        if words.len() != words_for(dim) {
            return Err(HdError::DimensionMismatch { expected: words_for(dim), found: words.len() });
        }
        if words[words.len() - 1] & !tail_mask(dim) != 0 {
            return Err(HdError::DirtyTail);
        }
        Ok(Self { dim, words })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn bit(&self, k: usize) -> bool {
        assert!(k < self.dim, "bit index {k} out of range for dim {}", self.dim);
        (self.words[k / 64] >> (k % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, k: usize, value: bool) {
        assert!(k < self.dim, "bit index {k} out of range for dim {}", self.dim);
        let mask = 1u64 << (k % 64);
        if value {
            self.words[k / 64] |= mask;
        } else {
            self.words[k / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, k: usize) {
        assert!(k < self.dim, "bit index {k} out of range for dim {}", self.dim);
        self.words[k / 64] ^= 1u64 << (k % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn complement(&self) -> Self {
        let mut out = Self { dim: self.dim, words: self.words.iter().map(|w| !w).collect() };
        out.clear_tail();
        out
    }

    pub fn iter_bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.dim).map(move |k| self.bit(k))
    }

    fn check_dim(&self, other: &Self) -> Result<(), HdError> {
        if self.dim != other.dim {
            return Err(HdError::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(())
    }

    /// Element-wise XOR. Self-inverse, so it also unbinds.
    pub fn bind(&self, other: &Self) -> Result<Self, HdError> {
        self.check_dim(other)?;
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Ok(Self { dim: self.dim, words })
    }

    /// Number of differing positions.
    pub fn hamming_bits(&self, other: &Self) -> Result<usize, HdError> {
        self.check_dim(other)?;
        Ok(self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones() as usize).sum())
    }

    /// Normalized Hamming distance in `[0, 1]`.
    pub fn hamming(&self, other: &Self) -> Result<f64, HdError> {
        Ok(self.hamming_bits(other)? as f64 / self.dim as f64)
    }

    fn clear_tail(&mut self) {
        let mask = tail_mask(self.dim);
        if let Some(last) = self.words.last_mut() {
            *last &= mask;
        }
    }
}

impl fmt::Debug for Hypervector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dim <= 128 {
            let s: String = self.iter_bits().map(|b| if b { '1' } else { '0' }).collect();
            write!(f, "Hypervector({s})")
        } else {
            write!(f, "Hypervector(dim={}, ones={})", self.dim, self.count_ones())
        }
    }
}

/// Bit-sliced per-position population counter.
///
/// Plane `p` holds bit `p` of every position's running count, so adding a
/// vector is a ripple-carry over at most `planes` words per 64 positions.
pub(crate) struct MajorityCounter {
    dim: usize,
    words: usize,
    planes: usize,
    counts: Vec<u64>,
    added: usize,
    capacity: usize,
}

impl MajorityCounter {
    pub(crate) fn new(dim: usize, capacity: usize) -> Self {
        let planes = (usize::BITS - capacity.leading_zeros()).max(1) as usize;
        let words = words_for(dim);
        Self { dim, words, planes, counts: vec![0; planes * words], added: 0, capacity }
    }

    #[inline]
    pub(crate) fn add_words<I: IntoIterator<Item = u64>>(&mut self, words: I) {
        debug_assert!(self.added < self.capacity);
        for (w, mut carry) in words.into_iter().enumerate() {
            let mut p = 0;
            while carry != 0 {
                let slot = &mut self.counts[p * self.words + w];
                let prev = *slot;
                *slot = prev ^ carry;
                carry &= prev;
                p += 1;
            }
        }
        self.added += 1;
    }

    /// Strict majority: bit set iff count > added / 2.
    pub(crate) fn majority(&self) -> Hypervector {
        // threshold <= capacity, so it always fits in `planes` bits.
        let threshold = (self.added / 2 + 1) as u64;
        let mut words = vec![0u64; self.words];
        for (w, out) in words.iter_mut().enumerate() {
            let mut gt = 0u64;
            let mut eq = u64::MAX;
            for p in (0..self.planes).rev() {
                let plane = self.counts[p * self.words + w];
                if (threshold >> p) & 1 == 1 {
                    eq &= plane;
                } else {
                    gt |= eq & plane;
                    eq &= !plane;
                }
            }
            *out = gt | eq;
        }
        let mut hv = Hypervector { dim: self.dim, words };
        hv.clear_tail();
        hv
    }
}

/// Per-position strict majority over `vs`; ties (even count, half ones) give 0.
pub fn bundle(vs: &[Hypervector]) -> Result<Hypervector, HdError> {
    let first = vs.first().ok_or(HdError::EmptyBundle)?;
    let mut counter = MajorityCounter::new(first.dim, vs.len());
    for v in vs {
        first.check_dim(v)?;
        counter.add_words(v.words.iter().copied());
    }
    Ok(counter.majority())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn hv(s: &str) -> Hypervector {
        Hypervector::from_bit_str(s).unwrap()
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(matches!(Hypervector::zeros(0), Err(HdError::InvalidDimension)));
        let mut rng = stream_rng(0, 0);
        assert!(matches!(Hypervector::random(0, &mut rng), Err(HdError::InvalidDimension)));
    }

    #[test]
    fn random_is_deterministic() {
        let a = Hypervector::random(8, &mut stream_rng(42, 0)).unwrap();
        let b = Hypervector::random(8, &mut stream_rng(42, 0)).unwrap();
        assert_eq!(a, b);
        let one = Hypervector::random(1, &mut stream_rng(42, 0)).unwrap();
        assert_eq!(one.dim(), 1);
        assert!(one.words()[0] <= 1);
    }

    #[test]
    fn independent_vectors_are_nearly_orthogonal() {
        let a = Hypervector::random(10_000, &mut stream_rng(1, 0)).unwrap();
        let b = Hypervector::random(10_000, &mut stream_rng(2, 0)).unwrap();
        let d = a.hamming(&b).unwrap();
        assert!((d - 0.5).abs() <= 0.02, "distance {d}");
    }

    #[test]
    fn bind_examples() {
        assert_eq!(hv("1010").bind(&hv("0110")).unwrap(), hv("1100"));
        let a = hv("10110");
        assert_eq!(a.bind(&a).unwrap().count_ones(), 0);
        let b = hv("01100");
        assert_eq!(a.bind(&b).unwrap().bind(&b).unwrap(), a);
        assert!(matches!(a.bind(&hv("1")), Err(HdError::DimensionMismatch { .. })));
    }

    #[test]
    fn bundle_examples() {
        assert_eq!(bundle(&[hv("1100"), hv("1010"), hv("1001")]).unwrap(), hv("1000"));
        assert_eq!(bundle(&[hv("10"), hv("01")]).unwrap(), hv("00"));
        let a = hv("0111001");
        assert_eq!(bundle(std::slice::from_ref(&a)).unwrap(), a);
        assert!(matches!(bundle(&[]), Err(HdError::EmptyBundle)));
        assert!(matches!(bundle(&[hv("10"), hv("1")]), Err(HdError::DimensionMismatch { .. })));
    }

    #[test]
    fn hamming_examples() {
        let a = hv("1010");
        assert_eq!(a.hamming(&a).unwrap(), 0.0);
        assert_eq!(a.hamming(&a.complement()).unwrap(), 1.0);
        assert_eq!(a.hamming(&hv("1001")).unwrap(), 0.5);
    }

    #[test]
    fn complement_keeps_tail_clear() {
        let a = Hypervector::zeros(70).unwrap().complement();
        assert_eq!(a.count_ones(), 70);
        assert!(Hypervector::from_words(70, a.words().to_vec()).is_ok());
        assert!(matches!(Hypervector::from_words(3, vec![0b1000]), Err(HdError::DirtyTail)));
    }

    #[test]
    fn bundle_spanning_many_words_and_planes() {
        // 300 vectors, 130 bits: position k is set in exactly k of them.
        let n = 300;
        let dim = 130;
        let vs: Vec<Hypervector> =
            (0..n).map(|i| Hypervector::from_bits(&(0..dim).map(|k| i < k).collect::<Vec<_>>()).unwrap()).collect();
        let out = bundle(&vs).unwrap();
        for k in 0..dim {
            assert_eq!(out.bit(k), k > n / 2, "position {k}");
        }
    }
}
