//! Binary model files.
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 4    | magic `HDCM`                              |
//! | 4      | 1    | format version (1)                        |
//! | 5      | 4    | dim, u32 LE                               |
//! | 9      | 4    | metadata length M, u32 LE                 |
//! | 13     | M    | metadata, UTF-8 JSON                      |
//! | 13+M   | ...  | vectors S, NS, levels..., IDs..., each    |
//! |        |      | `ceil(dim/64)` u64 LE words, zero-padded  |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::{Codebooks, EncoderConfig, FeatureRange};
use crate::error::{HdError, Result};
use crate::hypervector::Hypervector;
use crate::training::{ClassModel, ModelKind, TrainedModel};

pub const MODEL_MAGIC: &[u8; 4] = b"HDCM";
pub const MODEL_VERSION: u8 = 1;
pub const MODEL_HEADER_LEN: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ModelMeta {
    kind: ModelKind,
    source_cohort: String,
    subject_id: Option<String>,
    codebook_ref: String,
    sources: Vec<String>,
    encoder: EncoderConfig,
    num_features: usize,
    num_levels: usize,
    ranges: Vec<FeatureRange>,
}

fn corrupt(msg: impl Into<String>) -> HdError {
    HdError::CorruptModel(msg.into())
}

pub fn encode_model(m: &TrainedModel) -> Result<Vec<u8>> {
    let cb = &m.codebooks;
    let dim = m.model.dim();
    if cb.dim() != dim {
        return Err(HdError::DimensionMismatch {
            left: dim,
            right: cb.dim(),
        });
    }
    let dim32 = u32::try_from(dim).map_err(|_| HdError::invalid("dimension exceeds u32"))?;
    let meta = ModelMeta {
        kind: m.model.kind,
        source_cohort: m.model.source_cohort.clone(),
        subject_id: m.model.subject_id.clone(),
        codebook_ref: m.model.codebook_ref.clone(),
        sources: m.model.sources.clone(),
        encoder: cb.config(),
        num_features: cb.num_features(),
        num_levels: cb.num_levels(),
        ranges: cb.ranges().to_vec(),
    };
    let json = serde_json::to_vec(&meta)?;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.extend_from_slice(&dim32.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let vectors = [&m.model.seizure, &m.model.non_seizure]
        .into_iter()
        .chain(cb.level_vectors())
        .chain(cb.id_vectors());
    for v in vectors {
        for w in v.words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vector(&mut self, dim: usize, what: &str) -> Result<Hypervector> {
        let n = dim.div_ceil(64);
        let bytes = self.take(n * 8, what)?;
        let words = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Hypervector::from_words(dim, words).map_err(|e| corrupt(format!("{what}: {e}")))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MODEL_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.take(1, "version")?[0];
    if version != MODEL_VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let dim = r.u32("dimension")? as usize;
    let meta_len = r.u32("metadata length")? as usize;
    let meta: ModelMeta = serde_json::from_slice(r.take(meta_len, "metadata")?)
        .map_err(|e| corrupt(format!("metadata: {e}")))?;
    if meta.encoder.dim != dim {
        return Err(corrupt("metadata dimension disagrees with header"));
    }
    if meta.num_levels != meta.encoder.levels {
        return Err(corrupt("level count disagrees with encoder config"));
    }
    let seizure = r.vector(dim, "seizure vector")?;
    let non_seizure = r.vector(dim, "non-seizure vector")?;
    let levels = (0..meta.num_levels)
        .map(|i| r.vector(dim, &format!("level vector {i}")))
        .collect::<Result<Vec<_>>>()?;
    let ids = (0..meta.num_features)
        .map(|i| r.vector(dim, &format!("ID vector {i}")))
        .collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let codebooks = Codebooks::from_parts(meta.encoder, ids, levels, meta.ranges)
        .map_err(|e| corrupt(e.to_string()))?;
    let mut model = ClassModel::new(seizure, non_seizure, meta.kind)?;
    model.source_cohort = meta.source_cohort;
    model.subject_id = meta.subject_id;
    model.codebook_ref = meta.codebook_ref;
    model.sources = meta.sources;
    Ok(TrainedModel { model, codebooks })
}

pub fn save_model(m: &TrainedModel, path: &Path) -> Result<()> {
    let bytes = encode_model(m)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HdError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| HdError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(|e| HdError::io(path, e))?;
    decode_model(&bytes)
}
