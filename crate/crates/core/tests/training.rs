use nws_core::corpus::{render_plan, F0Track, PlannedNote, Waveform};
use nws_core::dsp::FeatureProfile;
use nws_core::graph::save_checkpoint;
use nws_core::train::{run_scenario, Arch, ModelSize, Scenario, SynthModel, TrackFeatures, TrainConfig, Trainer, TrainingSet};

fn tone_set(profile: FeatureProfile) -> TrainingSet {
    let sr = profile.sample_rate;
    let plan = [
        PlannedNote { start: 0, end: sr as usize / 2, f0_hz: 220.0 },
        PlannedNote { start: sr as usize / 2, end: sr as usize, f0_hz: 330.0 },
    ];
    let wave = Waveform::new(render_plan(&plan, sr, 3), sr).unwrap();
    let labels = F0Track::new((0..100).map(|i| if i < 50 { 220.0 } else { 330.0 }).collect(), 0.01).unwrap();
    TrainingSet {
        profile,
        tracks: vec![TrackFeatures::extract(&wave, &labels, &profile).unwrap()],
    }
}

fn scratch_config(arch: Arch, seed: u64) -> TrainConfig {
    let p = FeatureProfile::ts();
    let mut c = TrainConfig::new(arch, Scenario::Scratch, p);
    c.model_size = ModelSize::Tiny;
    c.crop_samples = 12 * p.hop;
    c.max_steps = 6;
    c.seed = seed;
    c
}

#[test]
fn scratch_runs_repeat_exactly() {
    let data = tone_set(FeatureProfile::ts());
    for arch in [Arch::Nsf, Arch::WaveNet] {
        let a = run_scenario(&scratch_config(arch, 4), Some(&data)).unwrap();
        let b = run_scenario(&scratch_config(arch, 4), Some(&data)).unwrap();
        assert_eq!(a.loss_csv(), b.loss_csv(), "{arch}");
        assert_eq!(a.model.to_checkpoint(), b.model.to_checkpoint(), "{arch}");
        let c = run_scenario(&scratch_config(arch, 5), Some(&data)).unwrap();
        assert_ne!(a.losses, c.losses, "{arch}");
    }
}

#[test]
fn one_fine_tune_step_moves_a_parameter() {
    let data = tone_set(FeatureProfile::ts());
    let dir = tempfile::tempdir().unwrap();
    for arch in [Arch::Nsf, Arch::WaveNet] {
        let pre = SynthModel::new(arch, ModelSize::Tiny, FeatureProfile::ts(), 8).unwrap();
        let path = dir.path().join(format!("{arch}.ckpt"));
        save_checkpoint(&pre.to_checkpoint(), &path).unwrap();
        let mut c = scratch_config(arch, 1);
        c.scenario = Scenario::FineTune;
        c.init_checkpoint = Some(path);
        c.max_steps = 1;
        let out = run_scenario(&c, Some(&data)).unwrap();
        assert_eq!(out.losses.len(), 1);
        let moved = pre
            .store()
            .tensors()
            .iter()
            .zip(out.model.store().tensors())
            .any(|(a, b)| a.data.iter().zip(&b.data).any(|(x, y)| x.to_bits() != y.to_bits()));
        assert!(moved, "{arch}: no parameter changed");
    }
}

#[test]
fn fine_tune_rejects_other_profile_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pre.ckpt");
    let pre = SynthModel::new(Arch::Nsf, ModelSize::Tiny, FeatureProfile::ts(), 2).unwrap();
    save_checkpoint(&pre.to_checkpoint(), &path).unwrap();
    let mut c = TrainConfig::new(Arch::Nsf, Scenario::FineTune, FeatureProfile::ft());
    c.init_checkpoint = Some(path);
    assert!(run_scenario(&c, Some(&tone_set(FeatureProfile::ft()))).is_err());
}

/// Loss at every step is no higher than the loss 50 steps earlier.
fn assert_windows_non_increasing(arch: Arch, losses: &[f64]) {
    for t in 50..losses.len() {
        assert!(losses[t] <= losses[t - 50], "{arch}: step {t} loss {} above {} at step {}", losses[t], losses[t - 50], t - 50);
    }
}

#[test]
fn cached_batch_loss_does_not_rise_across_windows() {
    let p = FeatureProfile::ts();
    let data = tone_set(p);
    let batch = data.tracks[0].crop(30, 20);
    for arch in [Arch::Nsf, Arch::WaveNet] {
        let model = SynthModel::new(arch, ModelSize::Tiny, p, 3).unwrap();
        let mut trainer = Trainer::new(model, 1e-4);
        let losses: Vec<f64> = (0..200).map(|_| trainer.step(&batch, 17).unwrap()).collect();
        assert_windows_non_increasing(arch, &losses);
        assert!(losses[199] < losses[0], "{arch}: {} -> {}", losses[0], losses[199]);
    }
}
