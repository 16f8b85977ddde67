//! Rainbow-grams: per-bin magnitude paired with instantaneous frequency
//! from the frame-to-frame phase advance.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::corpus::Waveform;

use super::{stft, DspError, FeatureProfile};

/// Bins quieter than this in either frame report zero IF deviation.
const SILENT_MAGNITUDE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Rainbowgram {
    pub frames: usize,
    pub bins: usize,
    pub magnitude: Vec<f32>,
    pub inst_freq: Vec<f32>,
    pub profile: FeatureProfile,
    /// Length of the analysed signal.
    pub samples: usize,
}

impl Rainbowgram {
    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.profile.sample_rate as f64 / self.profile.fft_size as f64
    }

    pub fn magnitude_at(&self, t: usize, k: usize) -> f32 {
        self.magnitude[t * self.bins + k]
    }

    pub fn inst_freq_at(&self, t: usize, k: usize) -> f32 {
        self.inst_freq[t * self.bins + k]
    }

    /// Bin with the largest magnitude in frame `t`.
    pub fn peak_bin(&self, t: usize) -> usize {
        let row = &self.magnitude[t * self.bins..(t + 1) * self.bins];
        (0..self.bins).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0)
    }

    /// Frames whose analysis window and predecessor lie inside the
    /// signal, or all frames but the first and last if none do.
    pub fn interior_frames(&self) -> std::ops::Range<usize> {
        let (hop, half) = (self.profile.hop, self.profile.fft_size / 2);
        let first = half.div_ceil(hop).max(1) + 1;
        let last = self.samples.saturating_sub(half) / hop;
        if first <= last && last < self.frames {
            first..last + 1
        } else {
            1..self.frames.saturating_sub(1)
        }
    }

    /// Instantaneous frequency at the bin with the largest total
    /// magnitude, averaged over interior frames.
    pub fn dominant_frequency(&self) -> Option<f64> {
        let frames = self.interior_frames();
        if frames.is_empty() {
            return None;
        }
        let k = (0..self.bins).max_by(|&a, &b| {
            let sa: f32 = frames.clone().map(|t| self.magnitude_at(t, a)).sum();
            let sb: f32 = frames.clone().map(|t| self.magnitude_at(t, b)).sum();
            sa.total_cmp(&sb)
        })?;
        let sum: f64 = frames.clone().map(|t| self.inst_freq_at(t, k) as f64).sum();
        Some(sum / frames.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,bin,magnitude,inst_freq_hz\n");
        for t in 0..self.frames {
            for k in 0..self.bins {
                writeln!(out, "{t},{k},{},{}", self.magnitude_at(t, k), self.inst_freq_at(t, k)).expect("string write");
            }
        }
        out
    }
}

fn principal_arg(x: f64) -> f64 {
    x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor()
}

pub fn rainbowgram(waveform: &Waveform, profile: &FeatureProfile) -> Result<Rainbowgram, DspError> {
    if waveform.sample_rate != profile.sample_rate {
        return Err(DspError::RateMismatch {
            profile: profile.name.to_string(),
            expected: profile.sample_rate,
            found: waveform.sample_rate,
        });
    }
    let spec = stft(&waveform.samples, profile);
    let (frames, bins) = (spec.frames, spec.bins);
    let sr = profile.sample_rate as f64;
    let n = profile.fft_size as f64;
    let hop = profile.hop as f64;

    let mut magnitude = Vec::with_capacity(frames * bins);
    let mut inst_freq = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        for k in 0..bins {
            let cur = spec.at(t, k);
            let bin_hz = k as f64 * sr / n;
            magnitude.push(cur.norm() as f32);
            let f = if t == 0 {
                bin_hz
            } else {
                let prev = spec.at(t - 1, k);
                if cur.norm() < SILENT_MAGNITUDE || prev.norm() < SILENT_MAGNITUDE {
                    bin_hz
                } else {
                    let expected = 2.0 * PI * k as f64 * hop / n;
                    let deviation = principal_arg(cur.arg() - prev.arg() - expected);
                    bin_hz + deviation * sr / (2.0 * PI * hop)
                }
            };
            inst_freq.push(f.clamp(0.0, sr / 2.0) as f32);
        }
    }
    Ok(Rainbowgram {
        frames,
        bins,
        magnitude,
        inst_freq,
        profile: *profile,
        samples: waveform.samples.len(),
    })
}
