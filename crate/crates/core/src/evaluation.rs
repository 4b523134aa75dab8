//! Episode and duration metrics, postprocessing, and the cross-validation and
//! transfer protocols.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{Codebooks, EncoderConfig};
use crate::error::{HdError, Result};
use crate::features::FeatureMatrix;
use crate::generalization::{generalize, MergeConfig};
use crate::hybrid::{compose_hybrid, HybridMode};
use crate::hypervector::{bundle, Hypervector};
use crate::training::{
    class_probability, classify, train, train_single_class, Class, ClassModel, ModelKind, Sample,
    TrainConfig, TrainMode, TrainedModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: f64,
    pub ppv: f64,
    pub f1: f64,
}

impl Metrics {
    /// Empty denominators count as perfect: no truth events gives TPR 1, no
    /// predicted events gives PPV 1.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let tpr = if tp + fn_ == 0 {
            1.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let ppv = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let f1 = if tpr + ppv == 0.0 {
            0.0
        } else {
            2.0 * tpr * ppv / (tpr + ppv)
        };
        Self { tpr, ppv, f1 }
    }
}

fn check_pair(pred: &[u8], truth: &[u8]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(HdError::invalid(format!(
            "prediction length {} vs truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

pub fn duration_metrics(pred: &[u8], truth: &[u8]) -> Result<Metrics> {
    check_pair(pred, truth)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub label: u8,
}

/// Split a label sequence into maximal constant runs.
pub fn episodes(seq: &[u8]) -> Vec<Episode> {
    let mut out: Vec<Episode> = Vec::new();
    for (i, &l) in seq.iter().enumerate() {
        let l = u8::from(l != 0);
        match out.last_mut() {
            Some(e) if e.label == l => e.end = i,
            _ => out.push(Episode {
                start: i,
                end: i,
                label: l,
            }),
        }
    }
    out
}

fn seizure_runs(seq: &[u8]) -> Vec<Episode> {
    episodes(seq).into_iter().filter(|e| e.label == 1).collect()
}

/// Any-overlap episode scoring.
pub fn episode_metrics(pred: &[u8], truth: &[u8]) -> Result<Metrics> {
    check_pair(pred, truth)?;
    let p = seizure_runs(pred);
    let t = seizure_runs(truth);
    let overlaps = |a: &Episode, b: &Episode| a.start <= b.end && b.start <= a.end;
    let tp = t
        .iter()
        .filter(|te| p.iter().any(|pe| overlaps(te, pe)))
        .count();
    let fp = p
        .iter()
        .filter(|pe| !t.iter().any(|te| overlaps(te, pe)))
        .count();
    let matched_pred = p.len() - fp;
    let tpr = if t.is_empty() {
        1.0
    } else {
        tp as f64 / t.len() as f64
    };
    let ppv = if p.is_empty() {
        1.0
    } else {
        matched_pred as f64 / p.len() as f64
    };
    let f1 = if tpr + ppv == 0.0 {
        0.0
    } else {
        2.0 * tpr * ppv / (tpr + ppv)
    };
    Ok(Metrics { tpr, ppv, f1 })
}

fn window_entries(window_sec: f64, step_sec: f64) -> Result<usize> {
    if !(window_sec > 0.0) || !(step_sec > 0.0) {
        return Err(HdError::invalid(
            "postprocessing window and step must be positive",
        ));
    }
    Ok(((window_sec / step_sec) - 1e-9).ceil().max(1.0) as usize)
}

pub const PROBABILITY_CLIP: f64 = 1e-6;

/// Trailing-window log-odds accumulation: output 1 where the product of odds
/// over the last `ceil(window/step)` windows reaches `threshold`.
pub fn bayes_postprocess(
    p_s: &[f64],
    window_sec: f64,
    threshold: f64,
    step_sec: f64,
) -> Result<Vec<u8>> {
    if !(threshold > 0.0) {
        return Err(HdError::invalid("bayes threshold must be positive"));
    }
    let n = window_entries(window_sec, step_sec)?;
    let log_odds: Vec<f64> = p_s
        .iter()
        .map(|&p| {
            let p = p.clamp(PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP);
            (p / (1.0 - p)).ln()
        })
        .collect();
    let cut = threshold.ln();
    Ok((0..log_odds.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(n);
            let sum: f64 = log_odds[lo..=i].iter().sum();
            u8::from(sum >= cut)
        })
        .collect())
}

/// Centered majority vote over `ceil(window/step)` entries, shrinking at the
/// edges; ties give 0.
pub fn moving_average_postprocess(pred: &[u8], window_sec: f64, step_sec: f64) -> Result<Vec<u8>> {
    let n = window_entries(window_sec, step_sec)?;
    Ok(majority_filter(pred, n))
}

pub fn majority_filter(pred: &[u8], n: usize) -> Vec<u8> {
    let left = (n - 1) / 2;
    let right = n / 2;
    let len = pred.len();
    (0..len)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(len - 1);
            let ones = pred[lo..=hi].iter().filter(|&&v| v != 0).count();
            u8::from(2 * ones > hi - lo + 1)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Episode,
    Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Post {
    Raw,
    Bayes,
    Movavg,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Episode => "episode",
            Level::Duration => "duration",
        }
    }
}

impl Post {
    pub const ALL: [Post; 3] = [Post::Raw, Post::Bayes, Post::Movavg];

    pub fn as_str(self) -> &'static str {
        match self {
            Post::Raw => "raw",
            Post::Bayes => "bayes",
            Post::Movavg => "movavg",
        }
    }
}

pub fn metric_key(level: Level, post: Post, name: &str) -> String {
    format!("{}.{}.{}", level.as_str(), post.as_str(), name)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    pub step_sec: f64,
    pub bayes_window_sec: f64,
    pub bayes_threshold: f64,
    pub movavg_window_sec: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            step_sec: 0.5,
            bayes_window_sec: 5.0,
            bayes_threshold: 1.5,
            movavg_window_sec: 5.0,
        }
    }
}

/// Per-record raw predictions and seizure probabilities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordPrediction {
    pub labels: Vec<u8>,
    pub p_seizure: Vec<f64>,
    pub truth: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub subject_id: String,
    pub model_kind: String,
    /// Keyed `level.postprocessing.name`, e.g. `episode.raw.f1`.
    pub metrics: BTreeMap<String, f64>,
    pub predictions: Vec<u8>,
    pub truth: Vec<u8>,
}

impl EvalReport {
    /// Score concatenated per-record predictions. Postprocessing runs per
    /// record so windows never smooth across record boundaries.
    pub fn from_predictions(
        subject_id: &str,
        model_kind: &str,
        records: &[RecordPrediction],
        post: &PostprocessConfig,
    ) -> Result<Self> {
        let mut seqs: BTreeMap<Post, Vec<u8>> = BTreeMap::new();
        let mut truth = Vec::new();
        for r in records {
            seqs.entry(Post::Raw).or_default().extend(&r.labels);
            seqs.entry(Post::Bayes)
                .or_default()
                .extend(bayes_postprocess(
                    &r.p_seizure,
                    post.bayes_window_sec,
                    post.bayes_threshold,
                    post.step_sec,
                )?);
            seqs.entry(Post::Movavg)
                .or_default()
                .extend(moving_average_postprocess(
                    &r.labels,
                    post.movavg_window_sec,
                    post.step_sec,
                )?);
            truth.extend(&r.truth);
        }
        if truth.is_empty() {
            return Err(HdError::InsufficientData(format!(
                "no windows to score for {subject_id}"
            )));
        }
        let mut metrics = BTreeMap::new();
        for p in Post::ALL {
            let pred = &seqs[&p];
            for (level, m) in [
                (Level::Episode, episode_metrics(pred, &truth)?),
                (Level::Duration, duration_metrics(pred, &truth)?),
            ] {
                metrics.insert(metric_key(level, p, "tpr"), m.tpr);
                metrics.insert(metric_key(level, p, "ppv"), m.ppv);
                metrics.insert(metric_key(level, p, "f1"), m.f1);
            }
        }
        Ok(Self {
            subject_id: subject_id.to_string(),
            model_kind: model_kind.to_string(),
            metrics,
            predictions: seqs.remove(&Post::Raw).unwrap_or_default(),
            truth,
        })
    }

    pub fn metric(&self, level: Level, post: Post, name: &str) -> f64 {
        self.metrics
            .get(&metric_key(level, post, name))
            .copied()
            .unwrap_or(f64::NAN)
    }

    pub fn f1e(&self, post: Post) -> f64 {
        self.metric(Level::Episode, post, "f1")
    }

    pub fn f1d(&self, post: Post) -> f64 {
        self.metric(Level::Duration, post, "f1")
    }
}

/// Mean of every metric over the reports.
pub fn cohort_average(reports: &[EvalReport]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for r in reports {
        for (k, v) in &r.metrics {
            *sums.entry(k.clone()).or_default() += v;
        }
    }
    let n = reports.len().max(1) as f64;
    sums.values_mut().for_each(|v| *v /= n);
    sums
}

/// One subject's feature matrices, one seizure per record, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectData {
    pub subject_id: String,
    pub cohort: String,
    pub records: Vec<FeatureMatrix>,
}

impl SubjectData {
    pub fn num_features(&self) -> Result<usize> {
        let n = self
            .records
            .first()
            .map(|r| r.num_features())
            .ok_or_else(|| {
                HdError::InsufficientData(format!("subject {} has no records", self.subject_id))
            })?;
        if let Some(r) = self.records.iter().find(|r| r.num_features() != n) {
            return Err(HdError::IncompatibleModels(format!(
                "record {} has {} features, expected {n}",
                r.record_id,
                r.num_features()
            )));
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub merge: MergeConfig,
    pub post: PostprocessConfig,
    /// Permute training labels with this seed (chance-level control).
    pub shuffle_labels: Option<u64>,
}

/// Classify each window of a record.
pub fn predict_record(
    model: &ClassModel,
    encoded: &[Hypervector],
    truth: &[u8],
) -> Result<RecordPrediction> {
    let mut out = RecordPrediction {
        truth: truth.to_vec(),
        ..Default::default()
    };
    for x in encoded {
        let (label, d_s, d_ns) = classify(x, model)?;
        out.labels.push(label);
        out.p_seizure.push(class_probability(d_s, d_ns));
    }
    Ok(out)
}

fn encode_all(codebooks: &Codebooks, records: &[&FeatureMatrix]) -> Result<Vec<Vec<Hypervector>>> {
    records.iter().map(|r| codebooks.encode_matrix(r)).collect()
}

/// Train one model from time-ordered encoded records.
fn train_encoded(
    encoded: &[&Vec<Hypervector>],
    labels: &[&Vec<u8>],
    cfg: &TrainConfig,
    shuffle: Option<u64>,
) -> Result<ClassModel> {
    let mut samples: Vec<Sample<'_>> = encoded
        .iter()
        .zip(labels)
        .flat_map(|(e, l)| e.iter().zip(l.iter()).map(|(v, &l)| (v, l)))
        .collect();
    if let Some(seed) = shuffle {
        let mut ls: Vec<u8> = samples.iter().map(|s| s.1).collect();
        ls.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for (s, l) in samples.iter_mut().zip(ls) {
            s.1 = l;
        }
    }
    train(&samples, cfg)
}

fn fresh_codebooks(
    num_features: usize,
    cfg: &EvalConfig,
    fit_on: &[&FeatureMatrix],
) -> Result<Codebooks> {
    let mut cb = Codebooks::build(num_features, cfg.encoder)?;
    cb.fit_ranges(fit_on.iter().copied())?;
    Ok(cb)
}

/// Train a personalized model on all of a subject's records, with encoder
/// ranges fit on the same records.
pub fn train_personalized(subject: &SubjectData, cfg: &EvalConfig) -> Result<TrainedModel> {
    let nf = subject.num_features()?;
    let recs: Vec<&FeatureMatrix> = subject.records.iter().collect();
    let codebooks = fresh_codebooks(nf, cfg, &recs)?;
    let model = personalized_under(subject, &codebooks, cfg)?;
    Ok(TrainedModel { model, codebooks })
}

/// Personalized model for `subject` using existing codebooks.
pub fn personalized_under(
    subject: &SubjectData,
    codebooks: &Codebooks,
    cfg: &EvalConfig,
) -> Result<ClassModel> {
    let recs: Vec<&FeatureMatrix> = subject.records.iter().collect();
    let encoded = encode_all(codebooks, &recs)?;
    let enc_refs: Vec<&Vec<Hypervector>> = encoded.iter().collect();
    let labels: Vec<&Vec<u8>> = subject.records.iter().map(|r| &r.window_labels).collect();
    let mut model = train_encoded(&enc_refs, &labels, &cfg.train, cfg.shuffle_labels)?;
    model.subject_id = Some(subject.subject_id.clone());
    model.source_cohort = subject.cohort.clone();
    model.codebook_ref = codebooks.fingerprint();
    Ok(model)
}

const MIN_RECORDS: usize = 3;

/// Leave-one-record-out (one seizure per record) personalized evaluation.
/// Encoder ranges are refit on the training records of every fold.
pub fn cv_personalized(subject: &SubjectData, cfg: &EvalConfig) -> Result<EvalReport> {
    let nf = subject.num_features()?;
    let n = subject.records.len();
    if n < MIN_RECORDS {
        return Err(HdError::InsufficientData(format!(
            "subject {} has {n} records, need at least {MIN_RECORDS}",
            subject.subject_id
        )));
    }
    let folds = (0..n)
        .into_par_iter()
        .map(|held| -> Result<RecordPrediction> {
            let train_recs: Vec<&FeatureMatrix> = subject
                .records
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != held)
                .map(|(_, r)| r)
                .collect();
            let codebooks = fresh_codebooks(nf, cfg, &train_recs)?;
            let encoded = encode_all(&codebooks, &train_recs)?;
            let enc_refs: Vec<&Vec<Hypervector>> = encoded.iter().collect();
            let labels: Vec<&Vec<u8>> = train_recs.iter().map(|r| &r.window_labels).collect();
            let shuffle = cfg
                .shuffle_labels
                .map(|s| s ^ (held as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let model = train_encoded(&enc_refs, &labels, &cfg.train, shuffle)?;
            let test = &subject.records[held];
            predict_record(&model, &codebooks.encode_matrix(test)?, &test.window_labels)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(
        &subject.subject_id,
        ModelKind::Personalized.as_str(),
        &folds,
        &cfg.post,
    )
}

/// What a transfer evaluation applies to the target subjects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransferMode {
    Generalized,
    Hybrid(HybridMode),
}

impl TransferMode {
    pub fn label(self) -> String {
        match self {
            TransferMode::Generalized => ModelKind::Generalized.as_str().to_string(),
            TransferMode::Hybrid(m) => format!("hybrid:{}", m.as_str()),
        }
    }
}

impl std::str::FromStr for TransferMode {
    type Err = HdError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("generalized") {
            Ok(TransferMode::Generalized)
        } else {
            s.parse().map(TransferMode::Hybrid)
        }
    }
}

pub enum TransferSource<'a> {
    /// A trained generalized model with its codebooks.
    Model(&'a TrainedModel),
    /// Source subjects; a generalized model is built per target subject from
    /// every source subject with a different ID.
    Cohort(&'a [SubjectData]),
}

/// Personalized models for every subject under one encoder whose ranges are
/// fit on all of the subjects' records.
pub fn personalized_cohort(
    subjects: &[&SubjectData],
    cfg: &EvalConfig,
) -> Result<(Codebooks, Vec<ClassModel>)> {
    let first = subjects
        .first()
        .ok_or_else(|| HdError::InsufficientData("no subjects".into()))?;
    let nf = first.num_features()?;
    for s in subjects {
        let n = s.num_features()?;
        if n != nf {
            return Err(HdError::IncompatibleModels(format!(
                "subject {} has {n} features, expected {nf}",
                s.subject_id
            )));
        }
    }
    let all: Vec<&FeatureMatrix> = subjects.iter().flat_map(|s| s.records.iter()).collect();
    let codebooks = fresh_codebooks(nf, cfg, &all)?;
    let models = subjects
        .par_iter()
        .map(|s| personalized_under(s, &codebooks, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok((codebooks, models))
}

/// Generalized model from source subjects, leaving out `exclude`.
pub fn generalized_from_cohort(
    sources: &[SubjectData],
    exclude: Option<&str>,
    cfg: &EvalConfig,
) -> Result<TrainedModel> {
    let used: Vec<&SubjectData> = sources
        .iter()
        .filter(|s| Some(s.subject_id.as_str()) != exclude)
        .collect();
    if used.is_empty() {
        return Err(HdError::InsufficientData(
            "no source subjects left to generalize".into(),
        ));
    }
    let (codebooks, personal) = personalized_cohort(&used, cfg)?;
    let model = generalize(&personal, &cfg.merge, cfg.train.seed)?;
    Ok(TrainedModel { model, codebooks })
}

fn train_one_class(
    vectors: &[&Hypervector],
    cfg: &TrainConfig,
    class: Class,
) -> Result<Hypervector> {
    if vectors.is_empty() {
        return Err(HdError::MissingClass(class.name()));
    }
    match cfg.mode {
        TrainMode::Standard => {
            let owned: Vec<Hypervector> = vectors.iter().map(|v| (*v).clone()).collect();
            bundle(&owned, cfg.seed)
        }
        TrainMode::Online => train_single_class(vectors, cfg),
    }
}

fn evaluate_target(
    target: &SubjectData,
    source: &TrainedModel,
    mode: TransferMode,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let cb = &source.codebooks;
    let nf = target.num_features()?;
    if nf != cb.num_features() {
        return Err(HdError::IncompatibleModels(format!(
            "target {} has {nf} features, source encoder expects {}",
            target.subject_id,
            cb.num_features()
        )));
    }
    let encoded: Vec<Vec<Hypervector>> = target
        .records
        .iter()
        .map(|r| cb.encode_matrix(r))
        .collect::<Result<_>>()?;
    let gen = &source.model;
    let preds = match mode {
        TransferMode::Generalized => encoded
            .iter()
            .zip(&target.records)
            .map(|(e, r)| predict_record(gen, e, &r.window_labels))
            .collect::<Result<Vec<_>>>()?,
        TransferMode::Hybrid(hm) => {
            let n = target.records.len();
            if n < MIN_RECORDS {
                return Err(HdError::InsufficientData(format!(
                    "subject {} has {n} records, need at least {MIN_RECORDS}",
                    target.subject_id
                )));
            }
            let class = match hm {
                HybridMode::NsGenSPers => Class::Seizure,
                HybridMode::NsPersSGen => Class::NonSeizure,
            };
            (0..n)
                .map(|held| {
                    let vectors: Vec<&Hypervector> = (0..n)
                        .filter(|&i| i != held)
                        .flat_map(|i| {
                            encoded[i]
                                .iter()
                                .zip(&target.records[i].window_labels)
                                .filter(|(_, &l)| Class::from_label(l) == class)
                                .map(|(v, _)| v)
                        })
                        .collect();
                    let own = train_one_class(&vectors, &cfg.train, class)?;
                    let (s, ns) = match class {
                        Class::Seizure => (own, gen.non_seizure.clone()),
                        Class::NonSeizure => (gen.seizure.clone(), own),
                    };
                    let mut pers = ClassModel::new(s, ns, ModelKind::Personalized)?;
                    pers.subject_id = Some(target.subject_id.clone());
                    let mut g = gen.clone();
                    g.kind = ModelKind::Generalized;
                    let model = compose_hybrid(&pers, &g, hm)?;
                    predict_record(&model, &encoded[held], &target.records[held].window_labels)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    EvalReport::from_predictions(&target.subject_id, &mode.label(), &preds, &cfg.post)
}

/// Apply a source (model or cohort) to every target subject.
pub fn transfer_eval(
    source: TransferSource<'_>,
    targets: &[SubjectData],
    mode: TransferMode,
    cfg: &EvalConfig,
) -> Result<Vec<EvalReport>> {
    targets
        .par_iter()
        .map(|t| match &source {
            TransferSource::Model(m) => evaluate_target(t, m, mode, cfg),
            TransferSource::Cohort(c) => {
                let m = generalized_from_cohort(c, Some(&t.subject_id), cfg)?;
                evaluate_target(t, &m, mode, cfg)
            }
        })
        .collect()
}

/// Leave-one-subject-out generalized evaluation.
pub fn cv_generalized(cohort: &[SubjectData], cfg: &EvalConfig) -> Result<Vec<EvalReport>> {
    if cohort.len() < 2 {
        return Err(HdError::InsufficientData(
            "generalized evaluation needs at least 2 subjects".into(),
        ));
    }
    transfer_eval(
        TransferSource::Cohort(cohort),
        cohort,
        TransferMode::Generalized,
        cfg,
    )
}
