//! Windowed-sinc low-pass design with a cutoff derivative, and
//! frame-varying FIR filtering.

use std::f64::consts::PI;

/// Cutoffs are clamped to this fraction of the sample rate from below so
/// the normalising sum stays positive.
const MIN_CUTOFF_FRACTION: f64 = 1e-4;

/// Symmetric Hamming window.
pub fn hamming(taps: usize) -> Vec<f64> {
    if taps == 1 {
        return vec![1.0];
    }
    (0..taps)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos())
        .collect()
}

/// Unit-DC-gain Hamming-windowed sinc low-pass with cutoff `cutoff_hz`,
/// plus the derivative of each coefficient with respect to `cutoff_hz`.
pub fn sinc_lowpass(cutoff_hz: f64, taps: usize, sample_rate: f64, window: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert!(taps % 2 == 1, "sinc filter needs an odd tap count");
    let lo = MIN_CUTOFF_FRACTION;
    let raw_fc = cutoff_hz / sample_rate;
    let (fc, active) = if raw_fc < lo {
        (lo, false)
    } else if raw_fc > 0.5 {
        (0.5, false)
    } else {
        (raw_fc, true)
    };
    let half = (taps / 2) as isize;
    let mut raw = vec![0.0; taps];
    let mut draw = vec![0.0; taps];
    for (j, (r, d)) in raw.iter_mut().zip(draw.iter_mut()).enumerate() {
        let m = j as isize - half;
        if m == 0 {
            *r = window[j] * 2.0 * fc;
            *d = window[j] * 2.0;
        } else {
            let m = m as f64;
            *r = window[j] * (2.0 * PI * fc * m).sin() / (PI * m);
            *d = window[j] * 2.0 * (2.0 * PI * fc * m).cos();
        }
    }
    let s: f64 = raw.iter().sum();
    let ds: f64 = draw.iter().sum();
    let h: Vec<f64> = raw.iter().map(|r| r / s).collect();
    let dh = if active {
        raw.iter()
            .zip(&draw)
            .map(|(r, d)| (d - r / s * ds) / s / sample_rate)
            .collect()
    } else {
        vec![0.0; taps]
    };
    (h, dh)
}

/// `y[t] = sum_j h_f[j] x[t + half - j]` with `f = min(t / hop, frames-1)`.
pub(crate) fn frame_fir(x: &[f64], coefs: &[f64], taps: usize, hop: usize) -> Vec<f64> {
    let frames = coefs.len() / taps;
    let n = x.len() as isize;
    let half = (taps / 2) as isize;
    (0..x.len())
        .map(|t| {
            let f = (t / hop).min(frames - 1);
            let h = &coefs[f * taps..(f + 1) * taps];
            let mut acc = 0.0;
            for (j, &hj) in h.iter().enumerate() {
                let idx = t as isize + half - j as isize;
                if idx >= 0 && idx < n {
                    acc += hj * x[idx as usize];
                }
            }
            acc
        })
        .collect()
}

/// Returns `(dx, dcoefs)`.
pub(crate) fn frame_fir_backward(x: &[f64], coefs: &[f64], taps: usize, hop: usize, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let frames = coefs.len() / taps;
    let n = x.len() as isize;
    let half = (taps / 2) as isize;
    let mut dx = vec![0.0; x.len()];
    let mut dc = vec![0.0; coefs.len()];
    for (t, &gt) in g.iter().enumerate() {
        if gt == 0.0 {
            continue;
        }
        let f = (t / hop).min(frames - 1);
        for j in 0..taps {
            let idx = t as isize + half - j as isize;
            if idx >= 0 && idx < n {
                dx[idx as usize] += gt * coefs[f * taps + j];
                dc[f * taps + j] += gt * x[idx as usize];
            }
        }
    }
    (dx, dc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowpass_has_unit_dc_gain_and_symmetry() {
        let w = hamming(63);
        for fc in [100.0, 1000.0, 5000.0, 11_999.0] {
            let (h, _) = sinc_lowpass(fc, 63, 24_000.0, &w);
            assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..31 {
                assert!((h[j] - h[62 - j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn nyquist_cutoff_is_identity() {
        let w = hamming(7);
        let (h, _) = sinc_lowpass(12_000.0, 7, 24_000.0, &w);
        assert!((h[3] - 1.0).abs() < 1e-12);
        assert!(h.iter().enumerate().all(|(j, &v)| j == 3 || v.abs() < 1e-12));
        let (clamped, dh) = sinc_lowpass(13_000.0, 7, 24_000.0, &w);
        assert_eq!(clamped, h);
        assert!(dh.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cutoff_derivative_matches_finite_differences() {
        let w = hamming(15);
        let (_, dh) = sinc_lowpass(3000.0, 15, 24_000.0, &w);
        let (hp, _) = sinc_lowpass(3000.0 + 1e-3, 15, 24_000.0, &w);
        let (hm, _) = sinc_lowpass(3000.0 - 1e-3, 15, 24_000.0, &w);
        for j in 0..15 {
            let num = (hp[j] - hm[j]) / 2e-3;
            assert!((num - dh[j]).abs() < 1e-9, "{j}");
        }
    }

    #[test]
    fn delta_filter_passes_signal() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut coefs = vec![0.0; 2 * 5];
        coefs[2] = 1.0;
        coefs[7] = 1.0;
        assert_eq!(frame_fir(&x, &coefs, 5, 10), x);
    }
}
