use crate::corpus::Waveform;

use super::{stft, DspError, FeatureProfile};

/// Magnitudes are floored here before the log.
pub const LOG_FLOOR: f64 = 1e-5;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the mel scale between the
/// profile's `fmin` and `fmax`, peak weight 1. Returned as
/// `n_mels x (fft_size/2 + 1)`, row-major.
pub fn mel_filterbank(profile: &FeatureProfile) -> Result<Vec<f64>, DspError> {
    let (fmin, fmax) = (profile.fmin, profile.fmax);
    if !(fmin >= 0.0 && fmin < fmax && fmax <= profile.nyquist()) {
        return Err(DspError::DegenerateFilterbank(format!(
            "band [{fmin}, {fmax}] Hz invalid for Nyquist {}",
            profile.nyquist()
        )));
    }
    let n_mels = profile.n_mels;
    let bins = profile.n_bins();
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = profile.sample_rate as f64 / profile.fft_size as f64;

    let mut fb = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (lo, centre, hi) = (points[m], points[m + 1], points[m + 2]);
        let row = &mut fb[m * bins..(m + 1) * bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let up = (f - lo) / (centre - lo);
            let down = (hi - f) / (hi - centre);
            *w = up.min(down).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(DspError::DegenerateFilterbank(format!(
                "filter {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin"
            )));
        }
    }
    Ok(fb)
}

/// Log-mel magnitudes, `frames x n_mels`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: usize,
    pub n_mels: usize,
    pub data: Vec<f32>,
    pub profile: FeatureProfile,
}

impl MelSpectrogram {
    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }

    /// Rows `start..start + len`, sharing the profile.
    pub fn slice_frames(&self, start: usize, len: usize) -> MelSpectrogram {
        MelSpectrogram {
            frames: len,
            n_mels: self.n_mels,
            data: self.data[start * self.n_mels..(start + len) * self.n_mels].to_vec(),
            profile: self.profile,
        }
    }
}

/// `ln(max(filterbank · |STFT|, 1e-5))` with `ceil(len / hop)` frames.
pub fn mel_spectrogram(waveform: &Waveform, profile: &FeatureProfile) -> Result<MelSpectrogram, DspError> {
    if waveform.sample_rate != profile.sample_rate {
        return Err(DspError::RateMismatch {
            profile: profile.name.to_string(),
            expected: profile.sample_rate,
            found: waveform.sample_rate,
        });
    }
    let fb = mel_filterbank(profile)?;
    let spec = stft(&waveform.samples, profile);
    let bins = spec.bins;
    let mut data = Vec::with_capacity(spec.frames * profile.n_mels);
    let mut mag = vec![0.0; bins];
    for t in 0..spec.frames {
        for (m, c) in mag.iter_mut().zip(spec.frame(t)) {
            *m = c.norm();
        }
        for filt in fb.chunks_exact(bins) {
            let e: f64 = filt.iter().zip(&mag).map(|(w, m)| w * m).sum();
            data.push(e.max(LOG_FLOOR).ln() as f32);
        }
    }
    Ok(MelSpectrogram {
        frames: spec.frames,
        n_mels: profile.n_mels,
        data,
        profile: *profile,
    })
}
