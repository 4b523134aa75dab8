//! Bit-packed binary hypervectors.
//!
//! Vectors are stored as little-endian `u64` words: bit `i` lives in word
//! `i / 64` at position `i % 64`. Bits past `dim` in the last word are always
//! zero. Accumulation happens in the bipolar domain (0 -> -1, 1 -> +1) so that
//! weighted subtraction is well defined; [`Accumulator::normalize`] maps back
//! to binary by sign.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dims, HdError, Result};

pub const DEFAULT_DIM: usize = 10_000;
pub const MIN_DIM: usize = 64;

/// Stream tag reserved for tie-break vectors. XORed with the dimension so
/// vectors of different sizes never share a tie pattern.
const TIE_BREAK_SALT: u64 = 0x7469_652d_6272_6b00;

/// Accumulated values within this fraction of the total absolute weight
/// count as ties, so rounding residue cannot decide a sign that is exactly
/// zero in real arithmetic.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[inline]
pub(crate) fn words_for(dim: usize) -> usize {
    dim.div_ceil(64)
}

#[inline]
fn tail_mask(dim: usize) -> u64 {
    match dim % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for Hypervector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Hypervector(dim={}, ones={})",
            self.dim,
            self.count_ones()
        )
    }
}

impl Hypervector {
    /// All-zero vector.
    pub fn zeros(dim: usize) -> Result<Self> {
        check_min_dim(dim)?;
        Ok(Self {
            dim,
            words: vec![0; words_for(dim)],
        })
    }

    /// Deterministic random vector keyed by `(seed, tag)`.
    ///
    /// Word `k` of the output is the `k`-th output of a ChaCha8 stream seeded
    /// with `seed` on stream `tag`, so a vector's prefix does not depend on
    /// `dim` and every bit is a fair coin.
    pub fn random(seed: u64, tag: u64, dim: usize) -> Result<Self> {
        check_min_dim(dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(tag);
        let mut words: Vec<u64> = (0..words_for(dim)).map(|_| rng.next_u64()).collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(dim);
        }
        Ok(Self { dim, words })
    }

    /// Build from an explicit bit sequence (one `bool` per dimension).
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let mut v = Self::zeros(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.words[i / 64] |= 1u64 << (i % 64);
            }
        }
        Ok(v)
    }

    /// Build from packed words. Padding bits past `dim` must be zero.
    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        check_min_dim(dim)?;
        if words.len() != words_for(dim) {
            return Err(HdError::invalid(format!(
                "expected {} words for dim {dim}, got {}",
                words_for(dim),
                words.len()
            )));
        }
        if words[words.len() - 1] & !tail_mask(dim) != 0 {
            return Err(HdError::invalid("non-zero padding bits"));
        }
        Ok(Self { dim, words })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        assert!(
            i < self.dim,
            "bit index {i} out of range for dim {}",
            self.dim
        );
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, value: bool) {
        assert!(
            i < self.dim,
            "bit index {i} out of range for dim {}",
            self.dim
        );
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip_bit(&mut self, i: usize) {
        assert!(
            i < self.dim,
            "bit index {i} out of range for dim {}",
            self.dim
        );
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.dim).map(|i| self.bit(i)).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(self.dim);
        }
        Self {
            dim: self.dim,
            words,
        }
    }

    /// Per-dimension XOR.
    pub fn bind(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a ^ b)
                .collect(),
        })
    }

    /// Number of differing dimensions.
    pub fn hamming_count(&self, other: &Self) -> Result<usize> {
        check_dims(self.dim, other.dim)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// Normalized Hamming distance in `[0, 1]`.
    pub fn hamming(&self, other: &Self) -> Result<f64> {
        Ok(self.hamming_count(other)? as f64 / self.dim as f64)
    }

    /// `1 - hamming`.
    pub fn similarity(&self, other: &Self) -> Result<f64> {
        Ok(1.0 - self.hamming(other)?)
    }
}

fn check_min_dim(dim: usize) -> Result<()> {
    if dim < MIN_DIM {
        Err(HdError::InvalidDimension { dim, min: MIN_DIM })
    } else {
        Ok(())
    }
}

pub fn random_hypervector(seed: u64, tag: u64, dim: usize) -> Result<Hypervector> {
    Hypervector::random(seed, tag, dim)
}

pub fn bind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    a.bind(b)
}

pub fn hamming_distance(a: &Hypervector, b: &Hypervector) -> Result<f64> {
    a.hamming(b)
}

/// The vector consulted for dimensions whose accumulated value is exactly zero.
pub fn tie_break_vector(seed: u64, dim: usize) -> Result<Hypervector> {
    Hypervector::random(seed, TIE_BREAK_SALT ^ dim as u64, dim)
}

/// Signed per-dimension sums in the bipolar domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    dim: usize,
    values: Vec<f64>,
    total_weight: f64,
    abs_weight: f64,
}

impl Accumulator {
    pub fn new(dim: usize) -> Result<Self> {
        check_min_dim(dim)?;
        Ok(Self {
            dim,
            values: vec![0.0; dim],
            total_weight: 0.0,
            abs_weight: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// `values[i] += weight * bipolar(v[i])`. Negative weights subtract.
    pub fn accumulate(&mut self, v: &Hypervector, weight: f64) -> Result<()> {
        check_dims(self.dim, v.dim)?;
        if !weight.is_finite() {
            return Err(HdError::invalid(format!("non-finite weight {weight}")));
        }
        for (chunk, &word) in self.values.chunks_mut(64).zip(&v.words) {
            for (b, value) in chunk.iter_mut().enumerate() {
                if (word >> b) & 1 == 1 {
                    *value += weight;
                } else {
                    *value -= weight;
                }
            }
        }
        self.total_weight += weight;
        self.abs_weight += weight.abs();
        Ok(())
    }

    /// Sign binarization. Values within [`TIE_TOLERANCE`] of the total
    /// absolute weight are ties and take the bit of the tie-break vector
    /// derived from `tie_break_seed`.
    pub fn normalize(&self, tie_break_seed: u64) -> Hypervector {
        let tie = tie_break_vector(tie_break_seed, self.dim)
            .expect("accumulator dim was validated at construction");
        self.normalize_with(&tie)
    }

    pub(crate) fn normalize_with(&self, tie: &Hypervector) -> Hypervector {
        debug_assert_eq!(tie.dim, self.dim);
        let tol = TIE_TOLERANCE * self.abs_weight;
        let mut words = vec![0u64; words_for(self.dim)];
        for ((chunk, out), &tie_word) in self.values.chunks(64).zip(&mut words).zip(&tie.words) {
            let mut w = 0u64;
            for (b, &value) in chunk.iter().enumerate() {
                let bit = if value > tol {
                    1
                } else if value < -tol {
                    0
                } else {
                    (tie_word >> b) & 1
                };
                w |= bit << b;
            }
            *out = w;
        }
        Hypervector {
            dim: self.dim,
            words,
        }
    }
}

pub fn accumulate(acc: &mut Accumulator, v: &Hypervector, weight: f64) -> Result<()> {
    acc.accumulate(v, weight)
}

pub fn normalize(acc: &Accumulator, tie_break_seed: u64) -> Hypervector {
    acc.normalize(tie_break_seed)
}

/// Unit-weight majority vote over `vectors`, ties resolved by the tie-break
/// vector of `tie_break_seed`.
pub fn bundle(vectors: &[Hypervector], tie_break_seed: u64) -> Result<Hypervector> {
    let first = vectors
        .first()
        .ok_or_else(|| HdError::invalid("cannot bundle an empty list"))?;
    let tie = tie_break_vector(tie_break_seed, first.dim)?;
    let mut counter = BitCounter::new(first.dim, vectors.len());
    for v in vectors {
        check_dims(first.dim, v.dim)?;
        counter.add(&v.words);
    }
    Ok(counter.majority(&tie))
}

/// Bit-sliced per-dimension population counter.
///
/// Plane `p` holds bit `p` of every dimension's count, so adding a vector is a
/// ripple-carry over at most `planes` words per input word.
pub(crate) struct BitCounter {
    dim: usize,
    words: usize,
    planes: usize,
    counts: Vec<u64>,
    added: usize,
}

impl BitCounter {
    pub(crate) fn new(dim: usize, max_count: usize) -> Self {
        let words = words_for(dim);
        let planes = (usize::BITS - max_count.max(1).leading_zeros()) as usize;
        Self {
            dim,
            words,
            planes,
            counts: vec![0; words * planes],
            added: 0,
        }
    }

    #[inline]
    fn add_word(&mut self, w: usize, mut carry: u64) {
        let mut p = 0;
        while carry != 0 {
            let slot = &mut self.counts[p * self.words + w];
            let next = *slot & carry;
            *slot ^= carry;
            carry = next;
            p += 1;
        }
    }

    pub(crate) fn add(&mut self, v: &[u64]) {
        assert!(self.added < (1usize << self.planes), "BitCounter overflow");
        for (w, &word) in v.iter().enumerate() {
            self.add_word(w, word);
        }
        self.added += 1;
    }

    /// Adds `a ^ b` without materializing it.
    pub(crate) fn add_xor(&mut self, a: &[u64], b: &[u64]) {
        assert!(self.added < (1usize << self.planes), "BitCounter overflow");
        for (w, (&x, &y)) in a.iter().zip(b).enumerate() {
            self.add_word(w, x ^ y);
        }
        self.added += 1;
    }

    /// Bit is 1 where `2 * count > added`, the tie bit where equal.
    pub(crate) fn majority(&self, tie: &Hypervector) -> Hypervector {
        let half = self.added / 2;
        let even = self.added.is_multiple_of(2);
        let mut words = vec![0u64; self.words];
        for (w, out) in words.iter_mut().enumerate() {
            // Bit-sliced comparison of every count against `half`, MSB first.
            let mut gt = 0u64;
            let mut eq = u64::MAX;
            for p in (0..self.planes).rev() {
                let plane = self.counts[p * self.words + w];
                if (half >> p) & 1 == 1 {
                    eq &= plane;
                } else {
                    gt |= eq & plane;
                    eq &= !plane;
                }
            }
            *out = if even { gt | (eq & tie.words[w]) } else { gt };
        }
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(self.dim);
        }
        Hypervector {
            dim: self.dim,
            words,
        }
    }
}
