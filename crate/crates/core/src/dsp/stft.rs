use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::FeatureProfile;

/// How samples outside the signal are filled for centred frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Reflect,
    Zero,
}

/// Complex STFT, `frames x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn at(&self, t: usize, k: usize) -> Complex64 {
        self.data[t * self.bins + k]
    }
}

/// Periodic Hann window of `win_length`, zero-padded and centred in
/// `fft_size` samples.
pub fn hann_window(win_length: usize, fft_size: usize) -> Vec<f64> {
    assert!(win_length <= fft_size && win_length > 0);
    let mut w = vec![0.0; fft_size];
    let offset = (fft_size - win_length) / 2;
    for i in 0..win_length {
        w[offset + i] = 0.5 - 0.5 * (2.0 * PI * i as f64 / win_length as f64).cos();
    }
    w
}

/// `ceil(len / hop)`: frames are centred on `t * hop`.
pub fn stft_frame_count(len: usize, hop: usize) -> usize {
    len.div_ceil(hop)
}

/// Folds any index onto `0..n` by mirror reflection without repeating
/// the edge sample.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

pub fn stft_with(samples: &[f32], fft_size: usize, hop: usize, win_length: usize, padding: Padding) -> Spectrogram {
    let window = hann_window(win_length, fft_size);
    let n = samples.len();
    let frames = stft_frame_count(n, hop);
    let bins = fft_size / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    let mut data = Vec::with_capacity(frames * bins);
    let half = (fft_size / 2) as isize;
    for t in 0..frames {
        let start = (t * hop) as isize - half;
        for (j, slot) in buf.iter_mut().enumerate() {
            let idx = start + j as isize;
            let v = if idx >= 0 && (idx as usize) < n {
                samples[idx as usize] as f64
            } else {
                match padding {
                    Padding::Reflect => samples[reflect_index(idx, n)] as f64,
                    Padding::Zero => 0.0,
                }
            };
            *slot = Complex64::new(v * window[j], 0.0);
        }
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Spectrogram { frames, bins, data }
}

/// Centred, reflection-padded STFT with the profile's Hann window.
pub fn stft(samples: &[f32], profile: &FeatureProfile) -> Spectrogram {
    stft_with(samples, profile.fft_size, profile.hop, profile.win_length, Padding::Reflect)
}
