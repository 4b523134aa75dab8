//! Butterworth IIR design (analog prototype, bilinear transform with
//! pre-warping) realized as cascaded second-order sections, plus zero-phase
//! application.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{HdError, Result};

/// One biquad: `[b0, b1, b2, a1, a2]` with `a0 = 1`.
pub type Section = [f64; 5];

#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    sections: Vec<Section>,
}

impl SosFilter {
    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    /// Butterworth bandpass of prototype order `order` (the band filter has
    /// `2 * order` poles).
    pub fn butter_bandpass(order: usize, low: f64, high: f64, fs: f64) -> Result<Self> {
        if order == 0 {
            return Err(HdError::invalid("filter order must be positive"));
        }
        if !(fs > 0.0) || !(low > 0.0) || !(low < high) || !(high < fs / 2.0) {
            return Err(HdError::invalid(format!(
                "band edges must satisfy 0 < low < high < fs/2, got [{low}, {high}] at fs={fs}"
            )));
        }
        // Pre-warped edges for the bilinear map s = (z - 1) / (z + 1).
        let w1 = (PI * low / fs).tan();
        let w2 = (PI * high / fs).tan();
        let bw = w2 - w1;
        let w0sq = w1 * w2;

        let mut analog = Vec::with_capacity(2 * order);
        for p in prototype_poles(order) {
            // s^2 - p*bw*s + w0^2 = 0
            let pb = p * bw;
            let disc = (pb * pb - 4.0 * w0sq).sqrt();
            analog.push((pb + disc) / 2.0);
            analog.push((pb - disc) / 2.0);
        }
        let digital: Vec<Complex64> = analog.iter().map(|&s| bilinear(s)).collect();
        let mut sections: Vec<Section> = pair_poles(&digital)
            .into_iter()
            .map(|(a1, a2)| [1.0, 0.0, -1.0, a1, a2])
            .collect();

        let center = (w0sq.sqrt()).atan() * fs / PI;
        normalize_gain(&mut sections, center, fs);
        Ok(Self { sections })
    }

    /// Butterworth lowpass of order `order`.
    pub fn butter_lowpass(order: usize, cutoff: f64, fs: f64) -> Result<Self> {
        if order == 0 {
            return Err(HdError::invalid("filter order must be positive"));
        }
        if !(fs > 0.0) || !(cutoff > 0.0) || !(cutoff < fs / 2.0) {
            return Err(HdError::invalid(format!(
                "cutoff must satisfy 0 < fc < fs/2, got {cutoff} at fs={fs}"
            )));
        }
        let wc = (PI * cutoff / fs).tan();
        let digital: Vec<Complex64> = prototype_poles(order)
            .into_iter()
            .map(|p| bilinear(p * wc))
            .collect();
        let mut sections = Vec::new();
        let pairs = pair_poles_allow_single(&digital);
        for (a1, a2, second_order) in pairs {
            if second_order {
                sections.push([1.0, 2.0, 1.0, a1, a2]);
            } else {
                sections.push([1.0, 1.0, 0.0, a1, 0.0]);
            }
        }
        normalize_gain(&mut sections, 0.0, fs);
        Ok(Self { sections })
    }

    pub fn frequency_response(&self, freq: f64, fs: f64) -> Complex64 {
        let zinv = Complex64::from_polar(1.0, -2.0 * PI * freq / fs);
        let zinv2 = zinv * zinv;
        self.sections
            .iter()
            .map(|s| (s[0] + s[1] * zinv + s[2] * zinv2) / (1.0 + s[3] * zinv + s[4] * zinv2))
            .product()
    }

    /// Causal filtering, starting each section in the steady state for a
    /// constant input equal to `x[0]`.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let Some(&x0) = x.first() else {
            return y;
        };
        let mut level = x0;
        for s in &self.sections {
            let [b0, b1, b2, a1, a2] = *s;
            let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
            let out = level * dc;
            let mut z2 = level * b2 - a2 * out;
            let mut z1 = level * b1 - a1 * out + z2;
            for v in y.iter_mut() {
                let input = *v;
                let o = b0 * input + z1;
                z1 = b1 * input - a1 * o + z2;
                z2 = b2 * input - a2 * o;
                *v = o;
            }
            level = out;
        }
        y
    }

    /// Zero-phase filtering with odd-extension padding.
    ///
    /// Runs forward-backward and backward-forward passes and averages them,
    /// which makes the operator commute exactly with time reversal.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        if n < 2 {
            return Err(HdError::degenerate(
                "zero-phase filtering needs at least 2 samples",
            ));
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let fwd_bwd = {
            let mut y = self.filter(&ext);
            y.reverse();
            let mut y = self.filter(&y);
            y.reverse();
            y
        };
        let bwd_fwd = {
            let mut r = ext.clone();
            r.reverse();
            let mut y = self.filter(&r);
            y.reverse();
            self.filter(&y)
        };
        Ok(fwd_bwd[pad..pad + n]
            .iter()
            .zip(&bwd_fwd[pad..pad + n])
            .map(|(a, b)| 0.5 * (a + b))
            .collect())
    }
}

/// Zero-phase Butterworth bandpass of prototype order `order`.
pub fn bandpass_filter(x: &[f64], fs: f64, low: f64, high: f64, order: usize) -> Result<Vec<f64>> {
    let filter = SosFilter::butter_bandpass(order, low, high, fs)?;
    if x.len() < 3 * order {
        return Err(HdError::degenerate(format!(
            "input of {} samples is shorter than 3x filter order {order}",
            x.len()
        )));
    }
    filter.filtfilt(x)
}

fn prototype_poles(order: usize) -> Vec<Complex64> {
    (1..=order)
        .map(|k| {
            let theta = PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn bilinear(s: Complex64) -> Complex64 {
    (1.0 + s) / (1.0 - s)
}

const IMAG_EPS: f64 = 1e-12;

/// Denominator coefficients `(a1, a2)` for each conjugate or real pole pair.
fn pair_poles(poles: &[Complex64]) -> Vec<(f64, f64)> {
    pair_poles_allow_single(poles)
        .into_iter()
        .map(|(a1, a2, second)| {
            debug_assert!(second, "bandpass poles always pair up");
            (a1, a2)
        })
        .collect()
}

fn pair_poles_allow_single(poles: &[Complex64]) -> Vec<(f64, f64, bool)> {
    let mut out = Vec::new();
    let mut reals = Vec::new();
    for p in poles {
        if p.im > IMAG_EPS {
            out.push((-2.0 * p.re, p.norm_sqr(), true));
        } else if p.im.abs() <= IMAG_EPS {
            reals.push(p.re);
        }
    }
    for pair in reals.chunks(2) {
        match *pair {
            [r1, r2] => out.push((-(r1 + r2), r1 * r2, true)),
            [r] => out.push((-r, 0.0, false)),
            _ => unreachable!(),
        }
    }
    out
}

fn normalize_gain(sections: &mut [Section], freq: f64, fs: f64) {
    let h = SosFilter {
        sections: sections.to_vec(),
    }
    .frequency_response(freq, fs)
    .norm();
    let g = 1.0 / h;
    for c in &mut sections[0][..3] {
        *c *= g;
    }
}
