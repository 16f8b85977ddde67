//! Multi-resolution log-magnitude STFT distance with its exact gradient.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::{hann_window, stft_frame_count};

/// Added to the power spectrum before the log.
pub const LOG_POWER_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftResolution {
    pub fft_size: usize,
    pub hop: usize,
    pub win_length: usize,
}

impl StftResolution {
    pub const fn new(fft_size: usize, hop: usize, win_length: usize) -> Self {
        Self {
            fft_size,
            hop,
            win_length,
        }
    }
}

/// Three resolutions at 24 kHz-scale: a medium one plus a fine and a
/// coarse view.
pub const DEFAULT_RESOLUTIONS: [StftResolution; 3] = [
    StftResolution::new(512, 80, 320),
    StftResolution::new(128, 40, 80),
    StftResolution::new(2048, 640, 1920),
];

/// Sum over resolutions of the mean squared difference of
/// `0.5 ln(|X|^2 + floor)` between `x` and `target`. Frames are centred on
/// multiples of the hop with zero padding.
pub fn multires_stft_loss(x: &[f64], target: &[f64], resolutions: &[StftResolution]) -> f64 {
    loss_and_grad(x, target, resolutions, false).0
}

pub(crate) fn multires_stft_loss_grad(x: &[f64], target: &[f64], resolutions: &[StftResolution]) -> (f64, Vec<f64>) {
    loss_and_grad(x, target, resolutions, true)
}

fn loss_and_grad(x: &[f64], target: &[f64], resolutions: &[StftResolution], want_grad: bool) -> (f64, Vec<f64>) {
    assert_eq!(x.len(), target.len(), "loss operands must have equal length");
    let len = x.len();
    let mut grad = vec![0.0; if want_grad { len } else { 0 }];
    let mut loss = 0.0;
    let mut planner = FftPlanner::<f64>::new();
    for r in resolutions {
        let n = r.fft_size;
        let window = hann_window(r.win_length, n);
        let frames = stft_frame_count(len, r.hop);
        let bins = n / 2 + 1;
        let count = (frames * bins) as f64;
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut bx = vec![Complex64::new(0.0, 0.0); n];
        let mut bt = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..frames {
            let start = (t * r.hop) as isize - (n / 2) as isize;
            for j in 0..n {
                let idx = start + j as isize;
                let (vx, vt) = if idx >= 0 && (idx as usize) < len {
                    (x[idx as usize], target[idx as usize])
                } else {
                    (0.0, 0.0)
                };
                bx[j] = Complex64::new(vx * window[j], 0.0);
                bt[j] = Complex64::new(vt * window[j], 0.0);
            }
            fwd.process(&mut bx);
            fwd.process(&mut bt);
            for k in 0..bins {
                let px = bx[k].norm_sqr() + LOG_POWER_FLOOR;
                let pt = bt[k].norm_sqr() + LOG_POWER_FLOOR;
                let d = 0.5 * (px.ln() - pt.ln());
                loss += d * d / count;
                if want_grad {
                    bx[k] *= d / px / count;
                }
            }
            if !want_grad {
                continue;
            }
            for v in &mut bx[bins..] {
                *v = Complex64::new(0.0, 0.0);
            }
            inv.process(&mut bx);
            for j in 0..n {
                let idx = start + j as isize;
                if idx >= 0 && (idx as usize) < len {
                    grad[idx as usize] += 2.0 * window[j] * bx[j].re;
                }
            }
        }
    }
    (loss, grad)
}
