//! Feature-vector to hypervector encoding.
//!
//! Every feature index owns a random ID vector; feature values are quantized
//! into `levels` bins, each bin owning a level vector. Level vectors form a
//! chain: consecutive levels differ in a disjoint block of positions, so the
//! distance between two levels grows linearly with their index gap. A window
//! is encoded as the majority bundle of `id[f] XOR level[q(x_f)]`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HdError, Result};
use crate::features::FeatureMatrix;
use crate::hypervector::{tie_break_vector, BitCounter, Hypervector, DEFAULT_DIM};

const LEVEL_BASE_TAG: u64 = 1;
const LEVEL_PERMUTATION_TAG: u64 = 2;
const ID_TAG_OFFSET: u64 = 1 << 32;

pub const DEFAULT_LEVELS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub levels: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            levels: DEFAULT_LEVELS,
            seed: 1,
        }
    }
}

/// Per-feature `(min, max)` observed on training data.
pub type FeatureRange = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct Codebooks {
    config: EncoderConfig,
    ids: Vec<Hypervector>,
    levels: Vec<Hypervector>,
    ranges: Vec<FeatureRange>,
    tie: Hypervector,
}

pub fn build_codebooks(
    num_features: usize,
    levels: usize,
    dim: usize,
    seed: u64,
) -> Result<Codebooks> {
    Codebooks::build(num_features, EncoderConfig { dim, levels, seed })
}

impl Codebooks {
    pub fn build(num_features: usize, config: EncoderConfig) -> Result<Self> {
        let EncoderConfig { dim, levels, seed } = config;
        if num_features == 0 {
            return Err(HdError::invalid("codebooks need at least one feature"));
        }
        if levels < 2 {
            return Err(HdError::invalid(format!(
                "need at least 2 levels, got {levels}"
            )));
        }
        if levels > dim / 2 {
            return Err(HdError::invalid(format!(
                "{levels} levels exceed dim/2 = {}",
                dim / 2
            )));
        }
        let ids = (0..num_features as u64)
            .map(|f| Hypervector::random(seed, ID_TAG_OFFSET + f, dim))
            .collect::<Result<Vec<_>>>()?;

        let block = dim / (2 * (levels - 1));
        let mut order: Vec<usize> = (0..dim).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(LEVEL_PERMUTATION_TAG);
        order.shuffle(&mut rng);

        let mut current = Hypervector::random(seed, LEVEL_BASE_TAG, dim)?;
        let mut level_vectors = Vec::with_capacity(levels);
        level_vectors.push(current.clone());
        for k in 0..levels - 1 {
            for &pos in &order[k * block..(k + 1) * block] {
                current.flip_bit(pos);
            }
            level_vectors.push(current.clone());
        }
        Ok(Self {
            config,
            ids,
            levels: level_vectors,
            ranges: Vec::new(),
            tie: tie_break_vector(seed, dim)?,
        })
    }

    /// Reassemble codebooks from stored parts (model files).
    pub fn from_parts(
        config: EncoderConfig,
        ids: Vec<Hypervector>,
        levels: Vec<Hypervector>,
        ranges: Vec<FeatureRange>,
    ) -> Result<Self> {
        if levels.len() != config.levels {
            return Err(HdError::invalid("level vector count does not match config"));
        }
        if !ranges.is_empty() && ranges.len() != ids.len() {
            return Err(HdError::invalid("range count does not match feature count"));
        }
        if ids.iter().chain(&levels).any(|v| v.dim() != config.dim) {
            return Err(HdError::invalid("codebook vector dimension mismatch"));
        }
        Ok(Self {
            config,
            ids,
            levels,
            ranges,
            tie: tie_break_vector(config.seed, config.dim)?,
        })
    }

    pub fn config(&self) -> EncoderConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn num_features(&self) -> usize {
        self.ids.len()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn id_vectors(&self) -> &[Hypervector] {
        &self.ids
    }

    pub fn level_vectors(&self) -> &[Hypervector] {
        &self.levels
    }

    pub fn ranges(&self) -> &[FeatureRange] {
        &self.ranges
    }

    pub fn has_ranges(&self) -> bool {
        !self.ranges.is_empty()
    }

    pub fn set_ranges(&mut self, ranges: Vec<FeatureRange>) -> Result<()> {
        if ranges.len() != self.num_features() {
            return Err(HdError::invalid(format!(
                "{} ranges for {} features",
                ranges.len(),
                self.num_features()
            )));
        }
        self.ranges = ranges;
        Ok(())
    }

    /// Set per-feature min/max from training matrices only.
    pub fn fit_ranges<'a>(
        &mut self,
        training: impl IntoIterator<Item = &'a FeatureMatrix>,
    ) -> Result<()> {
        let n = self.num_features();
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); n];
        let mut seen = 0usize;
        for fm in training {
            if fm.num_features() != n {
                return Err(HdError::IncompatibleModels(format!(
                    "matrix {} has {} features, codebooks expect {n}",
                    fm.record_id,
                    fm.num_features()
                )));
            }
            for row in fm.rows() {
                for (r, &v) in ranges.iter_mut().zip(row) {
                    r.0 = r.0.min(v);
                    r.1 = r.1.max(v);
                }
                seen += 1;
            }
        }
        if seen == 0 {
            return Err(HdError::InsufficientData(
                "no training windows to fit feature ranges".into(),
            ));
        }
        let degenerate = ranges.iter().filter(|(lo, hi)| lo >= hi).count();
        if degenerate > 0 {
            log::warn!("{degenerate} of {n} features are constant on the training data; they encode as level 0");
        }
        self.ranges = ranges;
        Ok(())
    }

    /// Stable identifier of the encoder: config, ranges and feature count.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.config.dim as u64).to_le_bytes());
        h.update((self.config.levels as u64).to_le_bytes());
        h.update(self.config.seed.to_le_bytes());
        h.update((self.num_features() as u64).to_le_bytes());
        for (lo, hi) in &self.ranges {
            h.update(lo.to_bits().to_le_bytes());
            h.update(hi.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Encoders agree on everything that affects the produced vectors.
    pub fn compatible_with(&self, other: &Codebooks) -> bool {
        self.config == other.config && self.ids == other.ids && self.levels == other.levels
    }

    pub fn encode(&self, features: &[f64]) -> Result<Hypervector> {
        encode_window(features, self)
    }

    pub fn encode_matrix(&self, fm: &FeatureMatrix) -> Result<Vec<Hypervector>> {
        if fm.num_features() != self.num_features() {
            return Err(HdError::IncompatibleModels(format!(
                "record {} has {} features, encoder expects {}",
                fm.record_id,
                fm.num_features(),
                self.num_features()
            )));
        }
        (0..fm.windows())
            .into_par_iter()
            .map(|w| self.encode(fm.row(w)))
            .collect()
    }
}

/// Level index for `value` under min-max normalization into `levels` bins.
pub fn quantize(value: f64, range: FeatureRange, levels: usize) -> Result<usize> {
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(HdError::invalid(format!("degenerate range [{lo}, {hi}]")));
    }
    let clamped = value.clamp(lo, hi);
    let idx = ((clamped - lo) / (hi - lo) * levels as f64).floor();
    Ok((idx.max(0.0) as usize).min(levels - 1))
}

pub fn encode_window(features: &[f64], codebooks: &Codebooks) -> Result<Hypervector> {
    let n = codebooks.num_features();
    if features.len() != n {
        return Err(HdError::invalid(format!(
            "feature vector has {} entries, encoder expects {n}",
            features.len()
        )));
    }
    if !codebooks.has_ranges() {
        return Err(HdError::invalid("feature ranges have not been fitted"));
    }
    let levels = codebooks.num_levels();
    let mut counter = BitCounter::new(codebooks.dim(), n);
    for ((&x, range), id) in features.iter().zip(&codebooks.ranges).zip(&codebooks.ids) {
        let q = quantize(x, *range, levels).unwrap_or(0);
        counter.add_xor(id.words(), codebooks.levels[q].words());
    }
    Ok(counter.majority(&codebooks.tie))
}
