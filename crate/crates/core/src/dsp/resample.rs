//! Rational polyphase down-sampling.

use std::f64::consts::PI;

use crate::corpus::Waveform;

use super::DspError;

/// Zero crossings of the interpolation kernel on each side.
const KERNEL_ZERO_CROSSINGS: f64 = 16.0;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `(up, down)` with `target / source = up / down` in lowest terms.
pub fn resample_ratio(source_rate: u32, target_rate: u32) -> (u64, u64) {
    let g = gcd(source_rate as u64, target_rate as u64).max(1);
    (target_rate as u64 / g, source_rate as u64 / g)
}

fn blackman(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Down-samples to `target_rate` with a Blackman-windowed sinc low-pass
/// whose cutoff is the target Nyquist frequency.
pub fn resample(waveform: &Waveform, target_rate: u32) -> Result<Waveform, DspError> {
    let source_rate = waveform.sample_rate;
    if target_rate > source_rate || target_rate == 0 {
        return Err(DspError::Upsampling {
            from: source_rate,
            to: target_rate,
        });
    }
    if target_rate == source_rate {
        return Ok(waveform.clone());
    }
    let (up, down) = resample_ratio(source_rate, target_rate);
    let (l, m) = (up as usize, down as usize);

    // cutoff in cycles per input sample
    let fc = 0.5 * up as f64 / down as f64;
    let half_width = KERNEL_ZERO_CROSSINGS / (2.0 * fc);
    let reach = half_width.ceil() as isize;
    let taps = 2 * reach as usize;

    // phase p holds weights for input offsets -reach+1..=reach around floor(t)
    let table: Vec<Vec<f64>> = (0..l)
        .map(|p| {
            let frac = p as f64 / l as f64;
            (0..taps)
                .map(|i| {
                    let offset = i as isize - reach + 1;
                    let d = frac - offset as f64;
                    2.0 * fc * sinc(2.0 * fc * d) * blackman(d / half_width)
                })
                .collect()
        })
        .collect();

    let x = &waveform.samples;
    let n_in = x.len();
    let n_out = (n_in * l).div_ceil(m);
    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let pos = j * m;
        let base = (pos / l) as isize;
        let weights = &table[pos % l];
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            let idx = base + i as isize - reach + 1;
            if idx >= 0 && (idx as usize) < n_in {
                acc += w * x[idx as usize] as f64;
            }
        }
        out.push(acc as f32);
    }
    Ok(Waveform {
        samples: out,
        sample_rate: target_rate,
    })
}
