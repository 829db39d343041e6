//! Packed bitvectors with popcount-based similarity kernels.
//!
//! Bit `i` of a vector is stored MSB-first: it lives in word `i / 64` at bit
//! position `63 - i % 64`. Serialising the words big-endian therefore yields
//! the byte layout of an `mpz_import(.., 1, 1, 1, 0, ..)` call: bit 0 is the
//! most significant bit of byte 0. Bits past `len` are always zero.

use std::fmt;
use std::sync::OnceLock;

use rand::Rng;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

/// How `majority_mode` resolves positions where exactly half the rows are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tie {
    #[default]
    Zero,
    One,
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

#[inline]
fn mask_bit(i: usize) -> u64 {
    1u64 << (WORD_BITS - 1 - i % WORD_BITS)
}

/// Mask of the valid (high) bits in the last word, or all ones if the length
/// is a multiple of 64.
#[inline]
fn tail_mask(len: usize) -> u64 {
    match len % WORD_BITS {
        0 => u64::MAX,
        r => !(u64::MAX >> r),
    }
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self {
            len,
            words: vec![u64::MAX; words_for(len)],
        };
        v.clear_tail();
        v
    }

    /// Uniformly random vector.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut v = Self {
            len,
            words: (0..words_for(len)).map(|_| rng.random()).collect(),
        };
        v.clear_tail();
        v
    }

    /// Each bit set independently with probability `p`.
    pub fn bernoulli<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Self {
        let mut v = Self::zeros(len);
        if p <= 0.0 {
            return v;
        }
        if p >= 1.0 {
            return Self::ones(len);
        }
        // 32-bit threshold comparison; resolution 2^-32 is far below any
        // probability this crate is asked to sample.
        let threshold = (p * (1u64 << 32) as f64) as u64;
        for i in 0..len {
            if (rng.next_u32() as u64) < threshold {
                v.words[i / WORD_BITS] |= mask_bit(i);
            }
        }
        v
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for b in bits {
            if len % WORD_BITS == 0 {
                words.push(0);
            }
            if b {
                *words.last_mut().unwrap() |= mask_bit(len);
            }
            len += 1;
        }
        Self { len, words }
    }

    /// Decode `len` bits from `bytes` (bit 0 = MSB of byte 0).
    ///
    /// `bytes` must hold exactly `ceil(len / 8)` bytes and the pad bits of the
    /// last byte must be zero.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        let need = len.div_ceil(8);
        if need > bytes.len() {
            return Err(Error::param(format!(
                "declared length {len} bits exceeds {} available bytes",
                bytes.len()
            )));
        }
        if need != bytes.len() {
            return Err(Error::LengthMismatch {
                expected: need,
                actual: bytes.len(),
            });
        }
        let mut words = Vec::with_capacity(words_for(len));
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words.push(u64::from_be_bytes(buf));
        }
        let v = Self { len, words };
        if !v.is_canonical() {
            return Err(Error::malformed("bitvector", "non-zero padding bits"));
        }
        Ok(v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.words.len() * 8);
        for w in &self.words {
            out.extend_from_slice(&w.to_be_bytes());
        }
        out.truncate(self.len.div_ceil(8));
        out
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.words[i / WORD_BITS] & mask_bit(i) != 0
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let w = &mut self.words[i / WORD_BITS];
        if value {
            *w |= mask_bit(i);
        } else {
            *w &= !mask_bit(i);
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.words[i / WORD_BITS] ^= mask_bit(i);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// True when all bits beyond `len` are zero.
    pub fn is_canonical(&self) -> bool {
        self.words.len() == words_for(self.len)
            && self
                .words
                .last()
                .is_none_or(|w| w & !tail_mask(self.len) == 0)
    }

    fn clear_tail(&mut self) {
        let m = tail_mask(self.len);
        if let Some(w) = self.words.last_mut() {
            *w &= m;
        }
    }

    pub fn popcount(&self) -> u64 {
        kernels().popcount(&self.words)
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn or(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a ^ b)
    }

    pub fn not(&self) -> Self {
        let mut v = Self {
            len: self.len,
            words: self.words.iter().map(|w| !w).collect(),
        };
        v.clear_tail();
        v
    }

    pub fn xor_assign(&mut self, other: &Self) -> Result<()> {
        Error::check_len(self.len, other.len)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Result<Self> {
        Error::check_len(self.len, other.len)?;
        Ok(Self {
            len: self.len,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// `popcount(self AND other)` without materialising the intersection.
    pub fn and_similarity(&self, other: &Self) -> Result<u64> {
        Error::check_len(self.len, other.len)?;
        Ok(kernels().and_count(&self.words, &other.words))
    }

    /// `popcount(self XOR other)`.
    pub fn hamming(&self, other: &Self) -> Result<u64> {
        Error::check_len(self.len, other.len)?;
        Ok(kernels().xor_count(&self.words, &other.words))
    }

    /// Per-position majority over `rows`; see [`BitCounter`].
    pub fn majority_mode(rows: &[BitVector], tie: Tie) -> Result<BitVector> {
        let first = rows
            .first()
            .ok_or_else(|| Error::param("majority_mode of an empty set"))?;
        let mut counter = BitCounter::new(first.len);
        for r in rows {
            counter.add(r)?;
        }
        counter.majority(tie)
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector[{}](", self.len)?;
        if self.len <= 128 {
            for b in self.iter() {
                f.write_str(if b { "1" } else { "0" })?;
            }
        } else {
            write!(f, "popcount={}", self.popcount())?;
        }
        f.write_str(")")
    }
}

/// Per-position set-bit counter used to compute cluster modes.
///
/// Counting is order-independent, so the same rows fed in any order (or from
/// any number of partial counters merged together) give the same mode.
#[derive(Debug, Clone)]
pub struct BitCounter {
    len: usize,
    rows: u64,
    counts: Vec<u32>,
}

impl BitCounter {
    pub fn new(len: usize) -> Self {
        Self {
            len,
            rows: 0,
            counts: vec![0; words_for(len) * WORD_BITS],
        }
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn add(&mut self, row: &BitVector) -> Result<()> {
        Error::check_len(self.len, row.len)?;
        for (word, lane) in row
            .words
            .iter()
            .zip(self.counts.chunks_exact_mut(WORD_BITS))
        {
            if *word == 0 {
                continue;
            }
            for (b, c) in lane.iter_mut().enumerate() {
                *c += ((word >> (WORD_BITS - 1 - b)) & 1) as u32;
            }
        }
        self.rows += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &BitCounter) -> Result<()> {
        Error::check_len(self.len, other.len)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.rows += other.rows;
        Ok(())
    }

    /// Bit `i` is set iff strictly more than half the rows have it set;
    /// exact halves follow `tie`.
    pub fn majority(&self, tie: Tie) -> Result<BitVector> {
        if self.rows == 0 {
            return Err(Error::param("majority of zero rows"));
        }
        let mut out = BitVector::zeros(self.len);
        for (i, &c) in self.counts[..self.len].iter().enumerate() {
            let twice = 2 * c as u64;
            let set = twice > self.rows || (twice == self.rows && tie == Tie::One);
            if set {
                out.words[i / WORD_BITS] |= mask_bit(i);
            }
        }
        Ok(out)
    }
}

/// Portable SWAR popcount, used when no hardware instruction is available.
#[inline]
pub fn swar_popcount(mut x: u64) -> u64 {
    x -= (x >> 1) & 0x5555_5555_5555_5555;
    x = (x & 0x3333_3333_3333_3333) + ((x >> 2) & 0x3333_3333_3333_3333);
    x = (x + (x >> 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    x.wrapping_mul(0x0101_0101_0101_0101) >> 56
}

/// Word-array popcount kernels. `Scalar` is always available; `Hardware`
/// uses the CPU popcount instruction when the running CPU has one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernels {
    Scalar,
    Hardware,
}

fn kernels() -> Kernels {
    static SELECTED: OnceLock<Kernels> = OnceLock::new();
    *SELECTED.get_or_init(Kernels::detect)
}

#[cfg(target_arch = "x86_64")]
mod hw {
    #[target_feature(enable = "popcnt")]
    pub fn popcount(a: &[u64]) -> u64 {
        a.iter().map(|w| w.count_ones() as u64).sum()
    }

    #[target_feature(enable = "popcnt")]
    pub fn and_count(a: &[u64], b: &[u64]) -> u64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x & y).count_ones() as u64)
            .sum()
    }

    #[target_feature(enable = "popcnt")]
    pub fn xor_count(a: &[u64], b: &[u64]) -> u64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x ^ y).count_ones() as u64)
            .sum()
    }
}

impl Kernels {
    pub fn detect() -> Self {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("popcnt") {
            return Kernels::Hardware;
        }
        Kernels::Scalar
    }

    /// Kernels usable on this machine: always `Scalar`, plus `Hardware` when detected.
    pub fn available() -> Vec<Self> {
        let mut v = vec![Kernels::Scalar];
        if Self::detect() == Kernels::Hardware {
            v.push(Kernels::Hardware);
        }
        v
    }

    pub fn popcount(self, a: &[u64]) -> u64 {
        match self {
            #[cfg(target_arch = "x86_64")]
            // SAFETY: `Hardware` is only constructed after runtime detection.
            Kernels::Hardware => unsafe { hw::popcount(a) },
            _ => a.iter().map(|w| swar_popcount(*w)).sum(),
        }
    }

    pub fn and_count(self, a: &[u64], b: &[u64]) -> u64 {
        match self {
            #[cfg(target_arch = "x86_64")]
            // SAFETY: see `popcount`.
            Kernels::Hardware => unsafe { hw::and_count(a, b) },
            _ => a.iter().zip(b).map(|(x, y)| swar_popcount(x & y)).sum(),
        }
    }

    pub fn xor_count(self, a: &[u64], b: &[u64]) -> u64 {
        match self {
            #[cfg(target_arch = "x86_64")]
            // SAFETY: see `popcount`.
            Kernels::Hardware => unsafe { hw::xor_count(a, b) },
            _ => a.iter().zip(b).map(|(x, y)| swar_popcount(x ^ y)).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_popcount(v: &BitVector) -> u64 {
        v.iter().filter(|b| *b).count() as u64
    }

    #[test]
    fn popcount_edges() {
        assert_eq!(BitVector::zeros(100).popcount(), 0);
        assert_eq!(BitVector::ones(65).popcount(), 65);
        assert!(BitVector::ones(65).is_canonical());
        assert_eq!(BitVector::zeros(0).popcount(), 0);
    }

    #[test]
    fn popcount_matches_naive_at_full_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = BitVector::random(49_955, &mut rng);
        assert_eq!(v.popcount(), naive_popcount(&v));
        for k in Kernels::available() {
            assert_eq!(k.popcount(v.words()), naive_popcount(&v));
        }
    }

    #[test]
    fn and_similarity_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = BitVector::random(1000, &mut rng);
        assert_eq!(x.and_similarity(&x.not()).unwrap(), 0);
        assert_eq!(x.and_similarity(&x).unwrap(), x.popcount());
        assert_eq!(x.hamming(&x).unwrap(), 0);
        assert_eq!(x.hamming(&x.not()).unwrap(), 1000);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let a = BitVector::zeros(10);
        let b = BitVector::zeros(11);
        assert!(matches!(a.hamming(&b), Err(Error::LengthMismatch { .. })));
        assert!(a.and_similarity(&b).is_err());
        assert!(a.xor(&b).is_err());
    }

    #[test]
    fn majority_examples() {
        let rows: Vec<_> = [0b1100u8, 0b1010, 0b1000]
            .iter()
            .map(|b| BitVector::from_bytes(&[b << 4], 4).unwrap())
            .collect();
        let m = BitVector::majority_mode(&rows, Tie::Zero).unwrap();
        assert_eq!(m, BitVector::from_bytes(&[0b1000 << 4], 4).unwrap());

        let single = vec![rows[1].clone()];
        assert_eq!(
            BitVector::majority_mode(&single, Tie::One).unwrap(),
            rows[1]
        );
        let same = vec![rows[0].clone(); 3];
        assert_eq!(BitVector::majority_mode(&same, Tie::Zero).unwrap(), rows[0]);
        assert!(BitVector::majority_mode(&[], Tie::Zero).is_err());
    }

    #[test]
    fn majority_tie_policy() {
        let a = BitVector::from_bools([true, false]);
        let b = BitVector::from_bools([false, false]);
        let rows = [a, b];
        assert_eq!(
            BitVector::majority_mode(&rows, Tie::Zero).unwrap(),
            BitVector::from_bools([false, false])
        );
        assert_eq!(
            BitVector::majority_mode(&rows, Tie::One).unwrap(),
            BitVector::from_bools([true, false])
        );
    }

    #[test]
    fn byte_convention_anchors() {
        let v = BitVector::from_bytes(&[0x80], 1).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v.get(0));

        let v = BitVector::from_bytes(&[0x01], 8).unwrap();
        let set: Vec<usize> = (0..8).filter(|&i| v.get(i)).collect();
        assert_eq!(set, vec![7]);
        assert_eq!(v.to_bytes(), vec![0x01]);
    }

    #[test]
    fn from_bytes_rejects_bad_lengths() {
        assert!(BitVector::from_bytes(&[0xff], 9).is_err());
        assert!(BitVector::from_bytes(&[0xff, 0x00], 8).is_err());
        // pad bit set
        assert!(BitVector::from_bytes(&[0xc0], 1).is_err());
    }

    #[test]
    fn round_trip_full_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = BitVector::random(49_955, &mut rng);
        let bytes = v.to_bytes();
        assert_eq!(bytes.len(), 6245);
        assert_eq!(BitVector::from_bytes(&bytes, 49_955).unwrap(), v);
    }

    #[test]
    fn counter_merge_is_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<_> = (0..9).map(|_| BitVector::random(130, &mut rng)).collect();
        let mut left = BitCounter::new(130);
        let mut right = BitCounter::new(130);
        for r in &rows[..4] {
            left.add(r).unwrap();
        }
        for r in rows[4..].iter().rev() {
            right.add(r).unwrap();
        }
        left.merge(&right).unwrap();
        assert_eq!(
            left.majority(Tie::Zero).unwrap(),
            BitVector::majority_mode(&rows, Tie::Zero).unwrap()
        );
    }

    #[test]
    fn bernoulli_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(BitVector::bernoulli(100, 0.0, &mut rng).popcount(), 0);
        assert_eq!(BitVector::bernoulli(100, 1.0, &mut rng).popcount(), 100);
        let v = BitVector::bernoulli(100_000, 0.25, &mut rng);
        let p = v.popcount() as f64 / 100_000.0;
        assert!((p - 0.25).abs() < 0.01, "{p}");
    }
}
