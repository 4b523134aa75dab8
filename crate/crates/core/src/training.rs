//! Class prototype training (single-pass bundling and OnlineHD-style weighted
//! accumulation) and nearest-prototype classification.

use serde::{Deserialize, Serialize};

use crate::encoding::Codebooks;
use crate::error::{check_dims, HdError, Result};
use crate::hypervector::{tie_break_vector, Accumulator, BitCounter, Hypervector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    NonSeizure,
    Seizure,
}

impl Class {
    pub fn from_label(label: u8) -> Self {
        if label == 1 {
            Class::Seizure
        } else {
            Class::NonSeizure
        }
    }

    pub fn label(self) -> u8 {
        match self {
            Class::Seizure => 1,
            Class::NonSeizure => 0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Class::Seizure => Class::NonSeizure,
            Class::NonSeizure => Class::Seizure,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Seizure => "seizure",
            Class::NonSeizure => "non-seizure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Personalized,
    Generalized,
    Hybrid,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Personalized => "personalized",
            ModelKind::Generalized => "generalized",
            ModelKind::Hybrid => "hybrid",
        }
    }
}

/// One prototype per class plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub seizure: Hypervector,
    pub non_seizure: Hypervector,
    pub kind: ModelKind,
    pub source_cohort: String,
    pub subject_id: Option<String>,
    /// Fingerprint of the codebooks the prototypes were trained under.
    pub codebook_ref: String,
    /// Free-form provenance, e.g. which models a hybrid was composed from.
    pub sources: Vec<String>,
}

impl ClassModel {
    pub fn new(seizure: Hypervector, non_seizure: Hypervector, kind: ModelKind) -> Result<Self> {
        check_dims(seizure.dim(), non_seizure.dim())?;
        Ok(Self {
            seizure,
            non_seizure,
            kind,
            source_cohort: String::new(),
            subject_id: None,
            codebook_ref: String::new(),
            sources: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.seizure.dim()
    }

    pub fn vector(&self, class: Class) -> &Hypervector {
        match class {
            Class::Seizure => &self.seizure,
            Class::NonSeizure => &self.non_seizure,
        }
    }

    /// Short provenance label (`<kind>:<cohort>/<subject>`).
    pub fn describe(&self) -> String {
        format!(
            "{}:{}/{}",
            self.kind.as_str(),
            self.source_cohort,
            self.subject_id.as_deref().unwrap_or("*")
        )
    }
}

/// A class model bundled with the encoder it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: ClassModel,
    pub codebooks: Codebooks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Standard,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub alpha: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Online,
            alpha: 1.0,
            epochs: 1,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(HdError::invalid(format!(
                "alpha {} must be finite and >= 0",
                self.alpha
            )));
        }
        if self.epochs == 0 {
            return Err(HdError::invalid("epochs must be >= 1"));
        }
        Ok(())
    }
}

/// A training example: encoded window and its 0/1 label.
pub type Sample<'a> = (&'a Hypervector, u8);

/// Update counters from online training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OnlineStats {
    pub additions: usize,
    pub subtractions: usize,
}

fn sample_dim(samples: &[Sample<'_>]) -> Result<usize> {
    let dim = samples
        .first()
        .map(|(v, _)| v.dim())
        .ok_or(HdError::MissingClass("seizure"))?;
    for (v, _) in samples {
        check_dims(dim, v.dim())?;
    }
    Ok(dim)
}

fn first_of<'a>(samples: &[Sample<'a>], class: Class) -> Result<&'a Hypervector> {
    samples
        .iter()
        .find(|(_, l)| Class::from_label(*l) == class)
        .map(|(v, _)| *v)
        .ok_or(HdError::MissingClass(class.name()))
}

pub fn train(samples: &[Sample<'_>], cfg: &TrainConfig) -> Result<ClassModel> {
    match cfg.mode {
        TrainMode::Standard => train_standard(samples, cfg),
        TrainMode::Online => train_online(samples, cfg),
    }
}

/// Each class prototype is the majority bundle of that class's samples.
pub fn train_standard(samples: &[Sample<'_>], cfg: &TrainConfig) -> Result<ClassModel> {
    let dim = sample_dim(samples)?;
    first_of(samples, Class::Seizure)?;
    first_of(samples, Class::NonSeizure)?;
    let tie = tie_break_vector(cfg.seed, dim)?;
    let count = |c: Class| {
        samples
            .iter()
            .filter(|(_, l)| Class::from_label(*l) == c)
            .count()
    };
    let mut s = BitCounter::new(dim, count(Class::Seizure));
    let mut ns = BitCounter::new(dim, count(Class::NonSeizure));
    for (v, l) in samples {
        match Class::from_label(*l) {
            Class::Seizure => s.add(v.words()),
            Class::NonSeizure => ns.add(v.words()),
        }
    }
    ClassModel::new(s.majority(&tie), ns.majority(&tie), ModelKind::Personalized)
}

pub fn train_online(samples: &[Sample<'_>], cfg: &TrainConfig) -> Result<ClassModel> {
    train_online_with_stats(samples, cfg).map(|(m, _)| m)
}

/// Online training: the true class absorbs each sample with weight
/// `alpha * (1 - similarity)`; on a misprediction the predicted class also
/// gives it up with weight `alpha * similarity`.
pub fn train_online_with_stats(
    samples: &[Sample<'_>],
    cfg: &TrainConfig,
) -> Result<(ClassModel, OnlineStats)> {
    cfg.validate()?;
    let dim = sample_dim(samples)?;
    let tie = tie_break_vector(cfg.seed, dim)?;
    let mut acc_s = Accumulator::new(dim)?;
    let mut acc_ns = Accumulator::new(dim)?;
    acc_s.accumulate(first_of(samples, Class::Seizure)?, 1.0)?;
    acc_ns.accumulate(first_of(samples, Class::NonSeizure)?, 1.0)?;
    let mut bin_s = acc_s.normalize_with(&tie);
    let mut bin_ns = acc_ns.normalize_with(&tie);
    let mut stats = OnlineStats::default();

    for _ in 0..cfg.epochs {
        for (x, label) in samples {
            let truth = Class::from_label(*label);
            let d_s = x.hamming(&bin_s)?;
            let d_ns = x.hamming(&bin_ns)?;
            let predicted = predict_from_distances(d_s, d_ns);
            let (d_true, d_pred) = match truth {
                Class::Seizure => (d_s, d_ns),
                Class::NonSeizure => (d_ns, d_s),
            };
            // 1 - s_C == d_C
            let add = cfg.alpha * d_true;
            if add != 0.0 {
                let (acc, bin) = match truth {
                    Class::Seizure => (&mut acc_s, &mut bin_s),
                    Class::NonSeizure => (&mut acc_ns, &mut bin_ns),
                };
                acc.accumulate(x, add)?;
                *bin = acc.normalize_with(&tie);
                stats.additions += 1;
            }
            if predicted != truth {
                let sub = cfg.alpha * (1.0 - d_pred);
                let (acc, bin) = match predicted {
                    Class::Seizure => (&mut acc_s, &mut bin_s),
                    Class::NonSeizure => (&mut acc_ns, &mut bin_ns),
                };
                acc.accumulate(x, -sub)?;
                *bin = acc.normalize_with(&tie);
                stats.subtractions += 1;
            }
        }
    }
    Ok((
        ClassModel::new(bin_s, bin_ns, ModelKind::Personalized)?,
        stats,
    ))
}

/// Online accumulation of a single class, for hybrids whose other prototype
/// comes from elsewhere. Samples are weighted by `alpha * (1 - similarity)`.
pub fn train_single_class(samples: &[&Hypervector], cfg: &TrainConfig) -> Result<Hypervector> {
    cfg.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| HdError::InsufficientData("no samples for single-class training".into()))?;
    let dim = first.dim();
    let tie = tie_break_vector(cfg.seed, dim)?;
    let mut acc = Accumulator::new(dim)?;
    acc.accumulate(first, 1.0)?;
    let mut bin = acc.normalize_with(&tie);
    for _ in 0..cfg.epochs {
        for x in samples {
            let w = cfg.alpha * x.hamming(&bin)?;
            if w != 0.0 {
                acc.accumulate(x, w)?;
                bin = acc.normalize_with(&tie);
            }
        }
    }
    Ok(bin)
}

fn predict_from_distances(d_s: f64, d_ns: f64) -> Class {
    if d_s < d_ns {
        Class::Seizure
    } else {
        Class::NonSeizure
    }
}

/// Nearest prototype by Hamming distance; ties go to non-seizure.
/// Returns `(label, d_seizure, d_non_seizure)`.
pub fn classify(x: &Hypervector, model: &ClassModel) -> Result<(u8, f64, f64)> {
    let d_s = x.hamming(&model.seizure)?;
    let d_ns = x.hamming(&model.non_seizure)?;
    Ok((predict_from_distances(d_s, d_ns).label(), d_s, d_ns))
}

/// Seizure share of the two similarities; 0.5 when both are zero.
pub fn class_probability(d_s: f64, d_ns: f64) -> f64 {
    let s = 1.0 - d_s;
    let ns = 1.0 - d_ns;
    if s + ns == 0.0 {
        0.5
    } else {
        s / (s + ns)
    }
}
