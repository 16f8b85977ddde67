use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::NsfError;

/// Per-sample excitation for the harmonic and noise branches.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceExcitation {
    pub harmonic: Vec<f32>,
    pub noise: Vec<f32>,
}

/// Standard deviation of unvoiced excitation: same power as a sine of
/// amplitude `alpha`.
pub fn unvoiced_std(alpha: f64) -> f64 {
    alpha / 2f64.sqrt()
}

/// Sine-plus-noise source. Voiced samples follow a cumulative phase
/// `phi[n] = phi[n-1] + 2 pi f0[n] / sr`, so frequency changes never
/// break phase continuity. Unvoiced samples and the noise branch are
/// Gaussian with the power of the voiced sine.
pub fn source_excitation(f0: &[f32], sample_rate: u32, alpha: f64, sigma: f64, seed: u64) -> Result<SourceExcitation, NsfError> {
    let sr = sample_rate as f64;
    let nyquist = sr / 2.0;
    for (index, &v) in f0.iter().enumerate() {
        if !(v >= 0.0) {
            return Err(NsfError::InvalidF0 { index, value: v });
        }
        if v as f64 >= nyquist {
            return Err(NsfError::F0AboveNyquist { index, value: v, nyquist });
        }
    }
    let mut harm_rng = ChaCha8Rng::seed_from_u64(seed);
    harm_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(2);
    let uv = unvoiced_std(alpha);
    let mut phase = 0.0f64;
    let mut harmonic = Vec::with_capacity(f0.len());
    let mut noise = Vec::with_capacity(f0.len());
    for &v in f0 {
        let eps: f64 = StandardNormal.sample(&mut harm_rng);
        let sample = if v > 0.0 {
            phase = (phase + 2.0 * PI * v as f64 / sr).rem_euclid(2.0 * PI);
            alpha * phase.sin() + sigma * eps
        } else {
            uv * eps
        };
        harmonic.push(sample as f32);
        let n: f64 = StandardNormal.sample(&mut noise_rng);
        noise.push((uv * n) as f32);
    }
    Ok(SourceExcitation { harmonic, noise })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_rate_tone_has_period_four() {
        let s = source_excitation(&[6000.0; 400], 24_000, 0.1, 0.0, 1).unwrap();
        for n in 0..396 {
            assert!((s.harmonic[n] - s.harmonic[n + 4]).abs() < 1e-6);
        }
        assert!((s.harmonic[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn zero_crossings_match_f0() {
        let s = source_excitation(&[440.0; 24_000], 24_000, 0.1, 0.003, 9).unwrap();
        let crossings = s.harmonic.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count();
        let f = crossings as f64 / 2.0;
        assert!((f - 440.0).abs() <= 1.0, "{f}");
    }

    #[test]
    fn unvoiced_is_white_with_sine_power() {
        let n = 48_000;
        let s = source_excitation(&vec![0.0; n], 24_000, 0.1, 0.003, 3).unwrap();
        let x: Vec<f64> = s.harmonic.iter().map(|&v| v as f64).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 2e-3);
        assert!((var / 0.005 - 1.0).abs() < 0.05, "{var}");
        for lag in 1..400 {
            let r: f64 = (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / (n as f64 * var);
            assert!(r.abs() < 0.2, "lag {lag}: {r}");
        }
    }

    #[test]
    fn branches_are_independent_and_seeded() {
        let a = source_excitation(&[0.0; 1000], 24_000, 0.1, 0.003, 5).unwrap();
        let b = source_excitation(&[0.0; 1000], 24_000, 0.1, 0.003, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.harmonic, a.noise);
        let c = source_excitation(&[0.0; 1000], 24_000, 0.1, 0.003, 6).unwrap();
        assert_ne!(a.noise, c.noise);
    }

    #[test]
    fn rejects_f0_at_nyquist() {
        assert!(matches!(
            source_excitation(&[100.0, 12_000.0], 24_000, 0.1, 0.003, 0),
            Err(NsfError::F0AboveNyquist { index: 1, .. })
        ));
        assert!(source_excitation(&[-1.0], 24_000, 0.1, 0.003, 0).is_err());
    }
}
