//! Deterministic synthetic EEG cohorts.
//!
//! Background activity is a sum of narrow-band resonators at fixed centre
//! frequencies. Each subject's background mixes a population-wide spectral
//! profile with a subject-specific one. A seizure adds a subject-specific
//! sinusoid, scaled per channel, on top of the background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HdError, Result};
use crate::features::{SignalRecord, DEFAULT_CHANNELS};

/// Centre frequencies (Hz) of the background components.
const COMPONENT_HZ: [f64; 7] = [1.0, 3.0, 6.0, 10.0, 16.0, 25.0, 35.0];
const BACKGROUND_RMS_UV: f64 = 50.0;
const BURN_IN_SEC: f64 = 2.0;
const FREQ_JITTER: f64 = 0.10;

// Stream tags; combined with subject/record/channel indices.
const TAG_PROFILE: u64 = 1;
const TAG_SUBJECT: u64 = 2;
const TAG_SHARED_NOISE: u64 = 3;
const TAG_SUBJECT_NOISE: u64 = 4;
const TAG_RECORD: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CohortSpec {
    pub name: String,
    pub num_subjects: usize,
    pub records_per_subject: usize,
    pub fs: f64,
    pub channels: usize,
    pub seizure_sec_per_record: f64,
    pub non_seizure_sec_per_record: f64,
    pub shared_background_weight: f64,
    pub seizure_freq_range: (f64, f64),
    pub seizure_amp_gain: f64,
    pub seed: u64,
    /// Seeds the population background profile. Cohorts sharing this value
    /// share non-seizure statistics.
    pub background_seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self::balanced(20)
    }
}

impl CohortSpec {
    /// Equal seizure and non-seizure time per record.
    pub fn balanced(num_subjects: usize) -> Self {
        Self {
            name: "synth".to_string(),
            num_subjects,
            records_per_subject: 3,
            fs: 256.0,
            channels: 18,
            seizure_sec_per_record: 60.0,
            non_seizure_sec_per_record: 60.0,
            shared_background_weight: 0.7,
            seizure_freq_range: (3.0, 8.0),
            seizure_amp_gain: 3.0,
            seed: 1,
            background_seed: 0,
        }
    }

    /// Ten times more non-seizure than seizure time.
    pub fn imbalanced(num_subjects: usize) -> Self {
        Self {
            non_seizure_sec_per_record: 600.0,
            ..Self::balanced(num_subjects)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HdError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("invalid cohort name '{}'", self.name));
        }
        if self.num_subjects == 0 || self.channels == 0 {
            return bad("cohort needs at least one subject and one channel".into());
        }
        if self.records_per_subject < 3 {
            return bad(format!(
                "records per subject must be >= 3, got {}",
                self.records_per_subject
            ));
        }
        if !(self.fs > 0.0) || !self.fs.is_finite() {
            return bad(format!("sampling rate {} must be positive", self.fs));
        }
        if !(self.seizure_sec_per_record > 0.0) || !(self.non_seizure_sec_per_record > 0.0) {
            return bad("seizure and non-seizure durations must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.shared_background_weight) {
            return bad(format!(
                "shared background weight {} outside [0, 1]",
                self.shared_background_weight
            ));
        }
        let (lo, hi) = self.seizure_freq_range;
        if !(lo > 0.0 && lo <= hi && hi * (1.0 + FREQ_JITTER) < self.fs / 2.0) {
            return bad(format!(
                "seizure frequency range [{lo}, {hi}] invalid for fs {}",
                self.fs
            ));
        }
        if !(self.seizure_amp_gain >= 1.0) || !self.seizure_amp_gain.is_finite() {
            return bad(format!(
                "seizure amplitude gain {} must be >= 1",
                self.seizure_amp_gain
            ));
        }
        Ok(())
    }

    pub fn channel_names(&self) -> Vec<String> {
        if self.channels <= DEFAULT_CHANNELS.len() {
            DEFAULT_CHANNELS[..self.channels]
                .iter()
                .map(|s| s.to_string())
                .collect()
        } else {
            (0..self.channels).map(|i| format!("ch{i:02}")).collect()
        }
    }

    pub fn subject_id(&self, subject: usize) -> String {
        format!("{}-s{subject:03}", self.name)
    }

    pub fn record_id(&self, subject: usize, record: usize) -> String {
        format!("{}-r{record:02}", self.subject_id(subject))
    }
}

/// Records of one synthetic subject, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    pub subject_id: String,
    pub seizure_freq: f64,
    pub records: Vec<SignalRecord>,
}

fn rng(seed: u64, tag: u64, a: usize, b: usize, c: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(tag | (a as u64) << 8 | (b as u64) << 32 | (c as u64) << 48);
    r
}

/// Power share per component: 1/f shape with log-normal jitter, summing to 1.
fn spectral_profile(r: &mut ChaCha8Rng, jitter: f64) -> Vec<f64> {
    let raw: Vec<f64> = COMPONENT_HZ
        .iter()
        .map(|f| {
            let z: f64 = StandardNormal.sample(r);
            (jitter * z).exp() / f
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Unit-variance narrow-band noise around `freq`.
fn resonator_noise(r: &mut ChaCha8Rng, freq: f64, fs: f64, len: usize) -> Vec<f64> {
    let bw = (0.3 * freq).max(0.5);
    let radius = (-std::f64::consts::PI * bw / fs).exp();
    let a1 = 2.0 * radius * (2.0 * std::f64::consts::PI * freq / fs).cos();
    let a2 = -radius * radius;
    let burn = (BURN_IN_SEC * fs) as usize;
    let (mut y1, mut y2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(len);
    for i in 0..burn + len {
        let x: f64 = StandardNormal.sample(r);
        let y = a1 * y1 + a2 * y2 + x;
        y2 = y1;
        y1 = y;
        if i >= burn {
            out.push(y);
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

fn colored_noise(r: &mut ChaCha8Rng, profile: &[f64], fs: f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (&f, &p) in COMPONENT_HZ.iter().zip(profile) {
        let comp = resonator_noise(r, f, fs, len);
        let g = p.sqrt();
        out.iter_mut().zip(comp).for_each(|(o, c)| *o += g * c);
    }
    out
}

struct SubjectTraits {
    profile: Vec<f64>,
    seizure_freq: f64,
    /// Per-channel seizure amplitude factor in [0.3, 1].
    spatial: Vec<f64>,
    /// Per-channel background scale around 1.
    channel_gain: Vec<f64>,
}

fn subject_traits(spec: &CohortSpec, subject: usize) -> SubjectTraits {
    let mut r = rng(spec.seed, TAG_SUBJECT, subject, 0, 0);
    let profile = spectral_profile(&mut r, 0.8);
    let (lo, hi) = spec.seizure_freq_range;
    let seizure_freq = if hi > lo { r.random_range(lo..=hi) } else { lo };
    let spatial = (0..spec.channels)
        .map(|_| r.random_range(0.3..=1.0))
        .collect();
    let channel_gain = (0..spec.channels)
        .map(|_| r.random_range(0.8..=1.2))
        .collect();
    SubjectTraits {
        profile,
        seizure_freq,
        spatial,
        channel_gain,
    }
}

fn generate_record(
    spec: &CohortSpec,
    shared: &[f64],
    traits: &SubjectTraits,
    subject: usize,
    record: usize,
) -> SignalRecord {
    let fs = spec.fs;
    let ns_before = (spec.non_seizure_sec_per_record / 2.0 * fs).round() as usize;
    let ns_total = (spec.non_seizure_sec_per_record * fs).round() as usize;
    let sz = (spec.seizure_sec_per_record * fs).round() as usize;
    let len = ns_total + sz;
    let onset = ns_before;
    let offset = ns_before + sz;

    let mut rr = rng(spec.seed, TAG_RECORD, subject, record, 0);
    let freq = traits.seizure_freq * (1.0 + rr.random_range(-FREQ_JITTER..=FREQ_JITTER));
    let phase = rr.random_range(0.0..std::f64::consts::TAU);
    let w = spec.shared_background_weight;
    let (ws, wp) = (w.sqrt(), (1.0 - w).sqrt());
    // Sine peak amplitude giving total seizure-segment RMS = gain * background RMS.
    let amp = BACKGROUND_RMS_UV * (2.0 * (spec.seizure_amp_gain.powi(2) - 1.0)).sqrt();

    let samples: Vec<Vec<f64>> = (0..spec.channels)
        .into_par_iter()
        .map(|ch| {
            let mut r_shared = rng(spec.seed, TAG_SHARED_NOISE, subject, record, ch);
            let mut r_subject = rng(spec.seed, TAG_SUBJECT_NOISE, subject, record, ch);
            let a = colored_noise(&mut r_shared, shared, fs, len);
            let b = colored_noise(&mut r_subject, &traits.profile, fs, len);
            let g = BACKGROUND_RMS_UV * traits.channel_gain[ch];
            let sa = amp * traits.spatial[ch] * traits.channel_gain[ch];
            (0..len)
                .map(|i| {
                    let mut v = g * (ws * a[i] + wp * b[i]);
                    if (onset..offset).contains(&i) {
                        let t = i as f64 / fs;
                        v += sa * (std::f64::consts::TAU * freq * t + phase).sin();
                    }
                    v
                })
                .collect()
        })
        .collect();
    let labels = (0..len)
        .map(|i| u8::from((onset..offset).contains(&i)))
        .collect();
    SignalRecord {
        record_id: spec.record_id(subject, record),
        subject_id: spec.subject_id(subject),
        fs,
        channels: spec.channel_names(),
        samples,
        labels,
    }
}

/// Deterministic for a given spec.
pub fn generate_synthetic_cohort(spec: &CohortSpec) -> Result<Vec<SyntheticSubject>> {
    spec.validate()?;
    let shared = spectral_profile(&mut rng(spec.background_seed, TAG_PROFILE, 0, 0, 0), 0.5);
    Ok((0..spec.num_subjects)
        .map(|s| {
            let traits = subject_traits(spec, s);
            let records = (0..spec.records_per_subject)
                .map(|r| generate_record(spec, &shared, &traits, s, r))
                .collect();
            SyntheticSubject {
                subject_id: spec.subject_id(s),
                seizure_freq: traits.seizure_freq,
                records,
            }
        })
        .collect())
}
