//! Per-channel EEG window features: mean amplitude, absolute and relative
//! band powers, line length and approximate-zero-crossing (AZC) counts.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{HdError, Result};
use crate::filter::SosFilter;

/// The 18 bipolar channels shared by both source databases.
pub const DEFAULT_CHANNELS: [&str; 18] = [
    "FP1-F7", "F7-T7", "T7-P7", "P7-O1", "FP1-F3", "F3-C3", "C3-P3", "P3-O1", "FP2-F4", "F4-C4",
    "C4-P4", "P4-O2", "FP2-F8", "F8-T8", "T8-P8", "P8-O2", "FZ-CZ", "CZ-PZ",
];

/// Upper edge of the range over which relative powers are normalized.
pub const RELATIVE_POWER_MAX_HZ: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub fn new(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.to_string(),
            low,
            high,
        }
    }

    /// Bins are assigned to `(low, high]`; the DC bin never belongs to a band.
    fn contains(&self, f: f64) -> bool {
        f > 0.0 && f > self.low && f <= self.high
    }
}

pub fn default_bands() -> Vec<Band> {
    vec![
        Band::new("low0", 0.0, 0.5),
        Band::new("low1", 0.1, 0.5),
        Band::new("delta", 0.5, 4.0),
        Band::new("theta", 4.0, 8.0),
        Band::new("alpha", 8.0, 12.0),
        Band::new("beta", 12.0, 30.0),
        Band::new("gamma", 30.0, 45.0),
    ]
}

pub const DEFAULT_AZC_EPSILONS: [f64; 6] = [0.0, 16.0, 32.0, 64.0, 128.0, 256.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub record_id: String,
    pub subject_id: String,
    pub fs: f64,
    pub channels: Vec<String>,
    /// `samples[channel][t]`, microvolts.
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl SignalRecord {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn duration_sec(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0) || !self.fs.is_finite() {
            return Err(HdError::invalid(format!(
                "sampling rate {} must be positive",
                self.fs
            )));
        }
        if self.channels.len() != self.samples.len() {
            return Err(HdError::invalid(format!(
                "{} channel names for {} channels",
                self.channels.len(),
                self.samples.len()
            )));
        }
        if self.channels.is_empty() {
            return Err(HdError::invalid("record has no channels"));
        }
        for (name, ch) in self.channels.iter().zip(&self.samples) {
            if ch.len() != self.labels.len() {
                return Err(HdError::invalid(format!(
                    "channel {name} has {} samples, labels have {}",
                    ch.len(),
                    self.labels.len()
                )));
            }
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l > 1) {
            return Err(HdError::invalid(format!("label {bad} is not 0/1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub window_sec: f64,
    pub step_sec: f64,
    pub bands: Vec<Band>,
    pub azc_epsilons: Vec<f64>,
    pub azc_band: (f64, f64),
    pub filter_order: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_sec: 4.0,
            step_sec: 0.5,
            bands: default_bands(),
            azc_epsilons: DEFAULT_AZC_EPSILONS.to_vec(),
            azc_band: (1.0, 20.0),
            filter_order: 4,
        }
    }
}

impl FeatureConfig {
    pub fn features_per_channel(&self) -> usize {
        1 + 2 * self.bands.len() + 1 + self.azc_epsilons.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = vec!["mean_amp".to_string()];
        names.extend(self.bands.iter().map(|b| format!("abs_{}", b.name)));
        names.extend(self.bands.iter().map(|b| format!("rel_{}", b.name)));
        names.push("line_length".to_string());
        names.extend((0..self.azc_epsilons.len()).map(|i| format!("azc_{i}")));
        names
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_sec > 0.0) || !(self.step_sec > 0.0) {
            return Err(HdError::invalid("window and step must be positive"));
        }
        if let Some(e) = self.azc_epsilons.iter().find(|e| !(**e >= 0.0)) {
            return Err(HdError::invalid(format!("AZC epsilon {e} must be >= 0")));
        }
        Ok(())
    }
}

/// Windows x (channels x features) matrix, channel-major within a row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub record_id: String,
    pub subject_id: String,
    pub channels: Vec<String>,
    pub feature_names: Vec<String>,
    values: Vec<f64>,
    pub window_labels: Vec<u8>,
    pub window_start_sec: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(
        record_id: String,
        subject_id: String,
        channels: Vec<String>,
        feature_names: Vec<String>,
        values: Vec<f64>,
        window_labels: Vec<u8>,
        window_start_sec: Vec<f64>,
    ) -> Result<Self> {
        let width = channels.len() * feature_names.len();
        if width == 0 {
            return Err(HdError::invalid("feature matrix has no columns"));
        }
        if values.len() != width * window_labels.len()
            || window_start_sec.len() != window_labels.len()
        {
            return Err(HdError::invalid(format!(
                "feature matrix shape mismatch: {} values for {} windows x {width} columns",
                values.len(),
                window_labels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HdError::invalid(
                "feature matrix contains non-finite values",
            ));
        }
        Ok(Self {
            record_id,
            subject_id,
            channels,
            feature_names,
            values,
            window_labels,
            window_start_sec,
        })
    }

    pub fn windows(&self) -> usize {
        self.window_labels.len()
    }

    pub fn features_per_channel(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_features(&self) -> usize {
        self.channels.len() * self.feature_names.len()
    }

    pub fn row(&self, window: usize) -> &[f64] {
        let w = self.num_features();
        &self.values[window * w..(window + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.num_features())
    }

    pub fn column_names(&self) -> Vec<String> {
        self.channels
            .iter()
            .flat_map(|c| self.feature_names.iter().map(move |f| format!("{c}:{f}")))
            .collect()
    }
}

/// Periodogram machinery for one window length: Hann taper plus a cached FFT plan.
pub struct SpectrumEstimator {
    len: usize,
    fs: f64,
    taper: Vec<f64>,
    taper_energy: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl SpectrumEstimator {
    pub fn new(len: usize, fs: f64) -> Self {
        // Periodic Hann.
        let taper: Vec<f64> = (0..len)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
            .collect();
        let taper_energy = taper.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(len);
        Self {
            len,
            fs,
            taper,
            taper_energy,
            fft,
        }
    }

    /// One-sided power per bin in µV², normalized by the taper energy so that
    /// the bins of a stationary signal sum to its variance.
    pub fn power_per_bin(&self, window: &[f64]) -> Vec<f64> {
        assert_eq!(window.len(), self.len);
        let mean = window.iter().sum::<f64>() / self.len as f64;
        let mut buf: Vec<Complex64> = window
            .iter()
            .zip(&self.taper)
            .map(|(x, w)| Complex64::new((x - mean) * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        let scale = 1.0 / (self.fs * self.taper_energy);
        let df = self.fs / self.len as f64;
        let half = self.len / 2;
        (0..=half)
            .map(|k| {
                let one_sided = if k == 0 || (self.len.is_multiple_of(2) && k == half) {
                    1.0
                } else {
                    2.0
                };
                buf[k].norm_sqr() * scale * one_sided * df
            })
            .collect()
    }

    pub fn band_powers(&self, window: &[f64], bands: &[Band]) -> (Vec<f64>, Vec<f64>) {
        let n_bands = bands.len();
        if window.iter().all(|&x| x == window[0]) {
            return (vec![0.0; n_bands], vec![0.0; n_bands]);
        }
        let power = self.power_per_bin(window);
        let df = self.fs / self.len as f64;
        let mut absolute = vec![0.0; n_bands];
        let mut total = 0.0;
        for (k, p) in power.iter().enumerate() {
            let f = k as f64 * df;
            if f > 0.0 && f <= RELATIVE_POWER_MAX_HZ {
                total += p;
            }
            for (band, acc) in bands.iter().zip(absolute.iter_mut()) {
                if band.contains(f) {
                    *acc += p;
                }
            }
        }
        let relative = if total > f64::MIN_POSITIVE {
            absolute.iter().map(|a| a / total).collect()
        } else {
            vec![0.0; n_bands]
        };
        (absolute, relative)
    }
}

/// Absolute and relative power per band from a Hann-tapered periodogram.
pub fn band_powers(window: &[f64], fs: f64, bands: &[Band]) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(fs > 0.0) {
        return Err(HdError::invalid("sampling rate must be positive"));
    }
    if (window.len() as f64) < fs {
        return Err(HdError::degenerate(format!(
            "band powers need at least one second of data, got {} samples at {fs} Hz",
            window.len()
        )));
    }
    Ok(SpectrumEstimator::new(window.len(), fs).band_powers(window, bands))
}

/// Mean absolute value.
pub fn mean_amplitude(window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Err(HdError::degenerate("mean amplitude of an empty window"));
    }
    Ok(window.iter().map(|x| x.abs()).sum::<f64>() / window.len() as f64)
}

pub fn line_length(window: &[f64]) -> Result<f64> {
    if window.len() < 2 {
        return Err(HdError::degenerate("line length needs at least 2 samples"));
    }
    Ok(window.windows(2).map(|w| (w[1] - w[0]).abs()).sum())
}

#[inline]
fn perpendicular_distance(x: &[f64], start: usize, end: usize, i: usize) -> f64 {
    let dt = (end - start) as f64;
    let dx = x[end] - x[start];
    let num = (dt * (x[i] - x[start]) - dx * (i - start) as f64).abs();
    num / (dt * dt + dx * dx).sqrt()
}

/// Farthest interior point of `[start, end]` from the chord, if any.
#[inline]
fn farthest(x: &[f64], start: usize, end: usize) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for i in start + 1..end {
        let d = perpendicular_distance(x, start, end, i);
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((i, d));
        }
    }
    best
}

/// Ramer–Douglas–Peucker simplification of the points `(t, x[t])`.
///
/// Returns strictly increasing indices that always include the first and
/// last sample. A point is kept when its distance exceeds `epsilon`.
pub fn polygonal_approximation(window: &[f64], epsilon: f64) -> Result<Vec<usize>> {
    if !(epsilon >= 0.0) {
        return Err(HdError::invalid(format!("epsilon {epsilon} must be >= 0")));
    }
    if window.len() < 2 {
        return Err(HdError::degenerate(
            "polygonal approximation needs at least 2 samples",
        ));
    }
    let n = window.len();
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0usize, n - 1)];
    while let Some((s, e)) = stack.pop() {
        if let Some((m, d)) = farthest(window, s, e) {
            if d > epsilon {
                keep[m] = true;
                stack.push((s, m));
                stack.push((m, e));
            }
        }
    }
    Ok((0..n).filter(|&i| keep[i]).collect())
}

/// RDP split persistence: for every vertex retained at `epsilon = 0`, the
/// smallest split distance along its recursion path. A vertex survives
/// simplification at tolerance `eps` iff its persistence exceeds `eps`.
fn rdp_persistence(x: &[f64]) -> Vec<(usize, f64)> {
    let n = x.len();
    let mut out = vec![(0, f64::INFINITY), (n - 1, f64::INFINITY)];
    let mut stack = vec![(0usize, n - 1, f64::INFINITY)];
    while let Some((s, e, bound)) = stack.pop() {
        if let Some((m, d)) = farthest(x, s, e) {
            if d > 0.0 {
                let p = bound.min(d);
                out.push((m, p));
                stack.push((s, m, p));
                stack.push((m, e, p));
            }
        }
    }
    out.sort_unstable_by_key(|&(i, _)| i);
    out
}

/// Sign changes of the piecewise-linear signal through `vertices`, sampled at
/// every index. Exact zeros inherit the previous nonzero sign.
fn reconstructed_crossings(x: &[f64], vertices: &[usize]) -> usize {
    let mut last_sign = 0i8;
    let mut crossings = 0;
    let mut visit = |v: f64| {
        let s = if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        };
        if s != 0 {
            if last_sign != 0 && s != last_sign {
                crossings += 1;
            }
            last_sign = s;
        }
    };
    visit(x[vertices[0]]);
    for seg in vertices.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let (xa, xb) = (x[a], x[b]);
        let span = (b - a) as f64;
        for t in a + 1..=b {
            let v = if t == b {
                xb
            } else {
                xa + (xb - xa) * (t - a) as f64 / span
            };
            visit(v);
        }
    }
    crossings
}

/// Zero-crossing rate (per second) of the polygonal approximation at each tolerance.
pub fn azc_features(window: &[f64], epsilons: &[f64], fs: f64) -> Result<Vec<f64>> {
    if let Some(e) = epsilons.iter().find(|e| !(**e >= 0.0)) {
        return Err(HdError::invalid(format!("epsilon {e} must be >= 0")));
    }
    if window.len() < 2 {
        return Err(HdError::degenerate("AZC needs at least 2 samples"));
    }
    let duration = window.len() as f64 / fs;
    let persistence = rdp_persistence(window);
    let mut vertices = Vec::with_capacity(persistence.len());
    Ok(epsilons
        .iter()
        .map(|&eps| {
            vertices.clear();
            vertices.extend(
                persistence
                    .iter()
                    .filter(|(_, p)| *p > eps)
                    .map(|(i, _)| *i),
            );
            reconstructed_crossings(window, &vertices) as f64 / duration
        })
        .collect())
}

/// Window geometry in samples.
pub fn window_count(total: usize, window: usize, step: usize) -> usize {
    if total < window || step == 0 {
        0
    } else {
        (total - window) / step + 1
    }
}

/// Slide a window over every channel of `record` and compute the feature row
/// for each window position.
pub fn extract_features(record: &SignalRecord, config: &FeatureConfig) -> Result<FeatureMatrix> {
    record.validate()?;
    config.validate()?;
    let fs = record.fs;
    let win = (config.window_sec * fs).round() as usize;
    let step = (config.step_sec * fs).round() as usize;
    if win < 2 || step == 0 {
        return Err(HdError::invalid("window/step shorter than one sample"));
    }
    let n_windows = window_count(record.len(), win, step);
    if n_windows == 0 {
        return Err(HdError::degenerate(format!(
            "record {} ({:.2} s) is shorter than one {} s window",
            record.record_id,
            record.duration_sec(),
            config.window_sec
        )));
    }
    if (win as f64) < fs {
        return Err(HdError::degenerate(
            "feature window shorter than one second",
        ));
    }
    let per_channel = config.features_per_channel();
    let n_channels = record.samples.len();
    let azc_filter = SosFilter::butter_bandpass(
        config.filter_order,
        config.azc_band.0,
        config.azc_band.1,
        fs,
    )?;
    let spectrum = SpectrumEstimator::new(win, fs);

    // One column block per channel, computed independently.
    let blocks: Vec<Vec<f64>> = record
        .samples
        .par_iter()
        .map(|raw| -> Result<Vec<f64>> {
            let filtered = azc_filter.filtfilt(raw)?;
            let mut block = Vec::with_capacity(n_windows * per_channel);
            for w in 0..n_windows {
                let range = w * step..w * step + win;
                let window = &raw[range.clone()];
                block.push(mean_amplitude(window)?);
                let (abs, rel) = spectrum.band_powers(window, &config.bands);
                block.extend(abs);
                block.extend(rel);
                block.push(line_length(window)?);
                block.extend(azc_features(&filtered[range], &config.azc_epsilons, fs)?);
            }
            Ok(block)
        })
        .collect::<Result<_>>()?;

    let width = n_channels * per_channel;
    let mut values = vec![0.0; n_windows * width];
    for (c, block) in blocks.iter().enumerate() {
        for w in 0..n_windows {
            let dst = w * width + c * per_channel;
            values[dst..dst + per_channel]
                .copy_from_slice(&block[w * per_channel..(w + 1) * per_channel]);
        }
    }
    let window_labels = (0..n_windows)
        .map(|w| {
            let seizure: usize = record.labels[w * step..w * step + win]
                .iter()
                .map(|&l| l as usize)
                .sum();
            u8::from(2 * seizure >= win)
        })
        .collect();
    let window_start_sec = (0..n_windows).map(|w| (w * step) as f64 / fs).collect();
    FeatureMatrix::new(
        record.record_id.clone(),
        record.subject_id.clone(),
        record.channels.clone(),
        config.feature_names(),
        values,
        window_labels,
        window_start_sec,
    )
}
