use nws_core::corpus::{read_wav, write_wav, Waveform};
use nws_core::dsp::{mel_spectrogram, mu_law_compand, mu_law_decode, mu_law_encode, FeatureProfile, QUANT_LEVELS};
use nws_core::eval::{pcc_values, vuv_error_values};
use proptest::prelude::*;

fn naive_pcc(r: &[f32], e: &[f32]) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (a, b) in r.iter().zip(e) {
        if *a > 0.0 && *b > 0.0 {
            xs.push(*a as f64);
            ys.push(*b as f64);
        }
    }
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    if !(den > 1e-9 * n * n) {
        return None;
    }
    Some((n * sxy - sx * sy) / den)
}

fn f0_track() -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0f32), 3 => 50.0f32..1000.0], 0..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wav_roundtrip_is_within_half_a_step(
        samples in prop::collection::vec(-1.2f32..1.2, 1..400),
        rate in prop_oneof![Just(16_000u32), Just(22_050), Just(48_000)],
        bits in prop_oneof![Just(16u16), Just(24)],
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let wave = Waveform::new(samples.clone(), rate).unwrap();
        write_wav(&wave, &path, bits).unwrap();
        let back = read_wav(&path).unwrap();
        prop_assert_eq!(back.sample_rate, rate);
        prop_assert_eq!(back.samples.len(), samples.len());
        let step = 1.0 / (1u32 << (bits - 1)) as f64;
        for (a, b) in samples.iter().zip(&back.samples) {
            let clipped = (*a as f64).clamp(-1.0, 1.0 - step);
            prop_assert!((clipped - *b as f64).abs() <= 0.5 * step + 1e-7, "{} -> {}", a, b);
        }
    }

    #[test]
    fn mu_law_is_monotonic_and_decodes_inside_its_cell(a in -1.5f64..1.5, b in -1.5f64..1.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(mu_law_encode(lo) <= mu_law_encode(hi));
        let code = mu_law_encode(a);
        prop_assert!(code < QUANT_LEVELS);
        let cell = 2.0 / QUANT_LEVELS as f64;
        let c = mu_law_compand(mu_law_decode(code).unwrap());
        let left = code as f64 * cell - 1.0;
        prop_assert!(c >= left - 1e-12 && c <= left + cell + 1e-12);
        prop_assert_eq!(mu_law_encode(mu_law_decode(code).unwrap()), code);
    }

    #[test]
    fn mel_frames_are_ceil_len_over_hop(len in 1usize..3000, ft in any::<bool>()) {
        let p = if ft { FeatureProfile::ft() } else { FeatureProfile::ts() };
        let samples: Vec<f32> = (0..len).map(|i| ((i * 37 % 101) as f32 / 101.0 - 0.5) * 0.2).collect();
        let mel = mel_spectrogram(&Waveform::new(samples, p.sample_rate).unwrap(), &p).unwrap();
        prop_assert_eq!(mel.frames, len.div_ceil(p.hop));
        prop_assert_eq!(mel.n_mels, 80);
        prop_assert_eq!(mel.data.len(), mel.frames * 80);
    }

    #[test]
    fn pcc_matches_sum_formula(r in f0_track(), e in f0_track()) {
        match (pcc_values(&r, &e), naive_pcc(&r, &e)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b),
            (None, None) => {}
            (Some(a), None) => prop_assert!(a.is_finite()),
            (None, Some(b)) => prop_assert!(false, "library gave None, oracle {}", b),
        }
    }

    #[test]
    fn vuv_matches_frame_count(r in f0_track(), e in f0_track()) {
        let n = r.len().min(e.len());
        let got = vuv_error_values(&r, &e);
        if n == 0 {
            prop_assert!(got.is_err());
        } else {
            let mut wrong = 0;
            for i in 0..n {
                if (r[i] > 0.0) != (e[i] > 0.0) {
                    wrong += 1;
                }
            }
            prop_assert!((got.unwrap() - 100.0 * wrong as f64 / n as f64).abs() < 1e-12);
        }
    }
}
