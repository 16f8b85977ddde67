//! Training harness: crops drawn from a manifest, one optimizer loop for
//! both synthesizers, and the scratch / zero-shot / fine-tune scenarios.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{parse_f0_labels, read_wav, CorpusError, CorpusManifest, Split, Waveform};
use crate::dsp::{align_f0_to_frames, mel_spectrogram, mu_law_encode, resample, DspError, FeatureProfile, MelSpectrogram, ProfileName};
use crate::graph::{
    clip_grad_norm, load_checkpoint, Adam, GradCheckReport, AdamConfig, ArchId, CheckpointError, Graph, GraphError, ModelCheckpoint, ParamStore,
};
use crate::nsf::{NsfConfig, NsfError, NsfModel};
use crate::wavenet::{SampleMode, WaveNetConfig, WaveNetError, WaveNetModel};

pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Nsf(#[from] NsfError),
    #[error(transparent)]
    WaveNet(#[from] WaveNetError),
    #[error("scenario {0} needs an init checkpoint")]
    MissingCheckpoint(Scenario),
    #[error("scratch training takes no init checkpoint")]
    UnexpectedCheckpoint,
    #[error("checkpoint profile {checkpoint} does not match feature profile {features}")]
    ProfileMismatch { checkpoint: ProfileName, features: ProfileName },
    #[error("manifest has no training records")]
    NoTrainingData,
    #[error("crop of {0} samples is shorter than one hop")]
    CropTooShort(usize),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    Nsf,
    WaveNet,
}

impl Arch {
    pub fn id(self) -> ArchId {
        match self {
            Arch::Nsf => ArchId::Nsf,
            Arch::WaveNet => ArchId::WaveNet,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Nsf => "nsf",
            Arch::WaveNet => "wavenet",
        })
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nsf" => Ok(Arch::Nsf),
            "wavenet" => Ok(Arch::WaveNet),
            _ => Err(format!("unknown architecture {s:?} (expected nsf or wavenet)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Scratch,
    ZeroShot,
    FineTune,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Scratch => "scratch",
            Scenario::ZeroShot => "zero-shot",
            Scenario::FineTune => "fine-tune",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "scratch" => Ok(Scenario::Scratch),
            "zero-shot" => Ok(Scenario::ZeroShot),
            "fine-tune" => Ok(Scenario::FineTune),
            _ => Err(format!("unknown scenario {s:?} (expected scratch, zero-shot or fine-tune)")),
        }
    }
}

/// Model width presets used when training from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelSize {
    Tiny,
    Desk,
    Full,
}

impl FromStr for ModelSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Ok(ModelSize::Tiny),
            "desk" => Ok(ModelSize::Desk),
            "full" => Ok(ModelSize::Full),
            _ => Err(format!("unknown model size {s:?} (expected tiny, desk or full)")),
        }
    }
}

/// Blocks in the tiny WaveNet preset (receptive field 256).
pub const TINY_WAVENET_BLOCKS: usize = 8;

/// Either synthesizer behind one interface.
#[derive(Debug, Clone)]
pub enum SynthModel {
    Nsf(NsfModel),
    WaveNet(WaveNetModel),
}

impl SynthModel {
    pub fn new(arch: Arch, size: ModelSize, profile: FeatureProfile, seed: u64) -> Result<Self, TrainError> {
        Ok(match arch {
            Arch::Nsf => SynthModel::Nsf(NsfModel::new(
                match size {
                    ModelSize::Tiny => NsfConfig::tiny(profile),
                    ModelSize::Desk => NsfConfig::desk(profile),
                    ModelSize::Full => NsfConfig::full(profile),
                },
                seed,
            )?),
            Arch::WaveNet => SynthModel::WaveNet(WaveNetModel::new(
                match size {
                    ModelSize::Tiny => WaveNetConfig::tiny(profile, TINY_WAVENET_BLOCKS),
                    ModelSize::Desk => WaveNetConfig::desk(profile),
                    ModelSize::Full => WaveNetConfig::full(profile),
                },
                seed,
            )?),
        })
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self, TrainError> {
        Ok(match ckpt.arch {
            ArchId::Nsf => SynthModel::Nsf(NsfModel::from_checkpoint(ckpt)?),
            ArchId::WaveNet => SynthModel::WaveNet(WaveNetModel::from_checkpoint(ckpt)?),
        })
    }

    pub fn arch(&self) -> Arch {
        match self {
            SynthModel::Nsf(_) => Arch::Nsf,
            SynthModel::WaveNet(_) => Arch::WaveNet,
        }
    }

    pub fn profile(&self) -> FeatureProfile {
        match self {
            SynthModel::Nsf(m) => m.config().profile,
            SynthModel::WaveNet(m) => m.config().profile,
        }
    }

    pub fn store(&self) -> &ParamStore<f32> {
        match self {
            SynthModel::Nsf(m) => m.store(),
            SynthModel::WaveNet(m) => m.store(),
        }
    }

    fn store_mut(&mut self) -> &mut ParamStore<f32> {
        match self {
            SynthModel::Nsf(m) => m.store_mut(),
            SynthModel::WaveNet(m) => m.store_mut(),
        }
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        match self {
            SynthModel::Nsf(m) => m.to_checkpoint(),
            SynthModel::WaveNet(m) => m.to_checkpoint(),
        }
    }

    /// Waveform of `frames * hop` samples. NSF draws its excitation from
    /// `seed`; WaveNet samples at temperature 1 from `seed`.
    pub fn synthesize(&self, mel: &MelSpectrogram, frame_f0: &[f32], seed: u64) -> Result<Waveform, TrainError> {
        Ok(match self {
            SynthModel::Nsf(m) => m.forward(mel, frame_f0, seed)?,
            SynthModel::WaveNet(m) => {
                let cond = m.conditioning_forward(mel, frame_f0)?;
                m.sample_autoregressive(&cond, seed, SampleMode::Sample)?
            }
        })
    }

    /// Loss of one crop, and gradients accumulated into the parameters.
    fn loss_and_grads(&mut self, batch: &Batch, seed: u64) -> Result<f64, TrainError> {
        let mut store = std::mem::take(self.store_mut());
        let result = self.loss_into(&mut store, batch, seed);
        *self.store_mut() = store;
        result
    }

    fn loss_into(&self, store: &mut ParamStore<f32>, batch: &Batch, seed: u64) -> Result<f64, TrainError> {
        let mut g = Graph::new();
        let loss = match self {
            SynthModel::Nsf(m) => {
                let x = m.prepare(&batch.mel, &batch.f0, seed)?;
                m.loss_graph(&mut g, store, &x, &batch.audio)?
            }
            SynthModel::WaveNet(m) => {
                let codes: Vec<u32> = batch.audio.iter().map(|&v| mu_law_encode(v as f64)).collect();
                let x = m.prepare(&batch.mel, &batch.f0, &codes)?;
                m.loss_graph(&mut g, store, &x)?
            }
        };
        let value = g.value(loss).data[0] as f64;
        g.backward(loss, store)?;
        Ok(value)
    }
}

/// One training example: aligned mel frames, frame F0 and audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub mel: MelSpectrogram,
    pub f0: Vec<f32>,
    /// `mel.frames * hop` samples.
    pub audio: Vec<f32>,
}

/// Features of a whole track at the profile's rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackFeatures {
    pub mel: MelSpectrogram,
    pub f0: Vec<f32>,
    /// Zero-padded to `mel.frames * hop`.
    pub audio: Vec<f32>,
}

impl TrackFeatures {
    /// Resamples if needed, then extracts mel frames and aligns labels.
    pub fn extract(wave: &Waveform, labels: &crate::corpus::F0Track, profile: &FeatureProfile) -> Result<Self, TrainError> {
        let wave = if wave.sample_rate == profile.sample_rate {
            wave.clone()
        } else {
            resample(wave, profile.sample_rate)?
        };
        let mel = mel_spectrogram(&wave, profile)?;
        let f0 = align_f0_to_frames(labels, mel.frames, profile);
        let mut audio = wave.samples;
        audio.resize(mel.frames * profile.hop, 0.0);
        Ok(Self { mel, f0, audio })
    }

    /// Crop of `frames` frames starting at `start`, clamped to the track.
    pub fn crop(&self, start: usize, frames: usize) -> Batch {
        let frames = frames.min(self.mel.frames);
        let start = start.min(self.mel.frames - frames);
        let hop = self.mel.profile.hop;
        Batch {
            mel: self.mel.slice_frames(start, frames),
            f0: self.f0[start..start + frames].to_vec(),
            audio: self.audio[start * hop..(start + frames) * hop].to_vec(),
        }
    }
}

/// Features of every training-split record, extracted once.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub profile: FeatureProfile,
    pub tracks: Vec<TrackFeatures>,
}

impl TrainingSet {
    pub fn from_manifest(manifest: &CorpusManifest, profile: &FeatureProfile) -> Result<Self, TrainError> {
        let subset = manifest.subset(Split::Train);
        let tracks = subset
            .records
            .iter()
            .map(|r| {
                let wave = read_wav(subset.audio_path(r))?;
                let labels = parse_f0_labels(subset.f0_path(r))?;
                TrackFeatures::extract(&wave, &labels, profile)
            })
            .collect::<Result<Vec<_>, _>>()?;
        if tracks.is_empty() {
            return Err(TrainError::NoTrainingData);
        }
        Ok(Self { profile: *profile, tracks })
    }

    /// A hop-aligned crop of `frames` frames from a random track.
    pub fn random_crop(&self, frames: usize, rng: &mut impl Rng) -> Batch {
        let track = &self.tracks[rng.random_range(0..self.tracks.len())];
        let span = track.mel.frames.saturating_sub(frames);
        let start = rng.random_range(0..=span);
        track.crop(start, frames)
    }
}

/// Gradient-clipped Adam over one model.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: SynthModel,
    adam: Adam,
    clip_norm: f64,
}

impl Trainer {
    pub fn new(model: SynthModel, learning_rate: f64) -> Self {
        Self {
            model,
            adam: Adam::new(AdamConfig {
                lr: learning_rate,
                ..AdamConfig::default()
            }),
            clip_norm: DEFAULT_CLIP_NORM,
        }
    }

    pub fn with_clip_norm(mut self, clip_norm: f64) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    pub fn steps_taken(&self) -> u64 {
        self.adam.step_count()
    }

    /// One optimizer step on `batch`; returns the loss before the update.
    /// `seed` drives the NSF excitation.
    pub fn step(&mut self, batch: &Batch, seed: u64) -> Result<f64, TrainError> {
        let loss = self.model.loss_and_grads(batch, seed)?;
        let store = self.model.store_mut();
        clip_grad_norm(store, self.clip_norm);
        self.adam.step(store)?;
        Ok(loss)
    }

    pub fn into_model(self) -> SynthModel {
        self.model
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: Arch,
    pub scenario: Scenario,
    pub profile: FeatureProfile,
    pub learning_rate: f64,
    /// Crop length in samples; rounded down to whole hops.
    pub crop_samples: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Required for zero-shot and fine-tune.
    pub init_checkpoint: Option<PathBuf>,
    /// Preset used when training from scratch.
    pub model_size: ModelSize,
}

impl TrainConfig {
    pub fn new(arch: Arch, scenario: Scenario, profile: FeatureProfile) -> Self {
        Self {
            arch,
            scenario,
            profile,
            learning_rate: AdamConfig::default().lr,
            crop_samples: profile.sample_rate as usize,
            max_steps: 1000,
            seed: 0,
            init_checkpoint: None,
            model_size: ModelSize::Desk,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        match (self.scenario, &self.init_checkpoint) {
            (Scenario::ZeroShot | Scenario::FineTune, None) => Err(TrainError::MissingCheckpoint(self.scenario)),
            (Scenario::Scratch, Some(_)) => Err(TrainError::UnexpectedCheckpoint),
            _ if self.crop_samples < self.profile.hop => Err(TrainError::CropTooShort(self.crop_samples)),
            _ => Ok(()),
        }
    }

    pub fn crop_frames(&self) -> usize {
        self.crop_samples / self.profile.hop
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SynthModel,
    /// `(step, loss)` for every optimizer step, starting at 1.
    pub losses: Vec<(usize, f64)>,
}

impl TrainOutcome {
    pub fn loss_csv(&self) -> String {
        loss_csv(&self.losses)
    }
}

pub fn loss_csv(losses: &[(usize, f64)]) -> String {
    let mut out = String::from("step,loss\n");
    for (step, loss) in losses {
        writeln!(out, "{step},{loss}").expect("string write");
    }
    out
}

pub fn write_loss_csv(losses: &[(usize, f64)], path: impl AsRef<Path>) -> Result<(), TrainError> {
    let path = path.as_ref();
    std::fs::write(path, loss_csv(losses)).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a checkpoint and checks it against the run's arch and profile.
pub fn load_init(path: &Path, arch: Arch, profile: &FeatureProfile) -> Result<SynthModel, TrainError> {
    let ckpt = load_checkpoint(path)?;
    ckpt.expect_arch(arch.id())?;
    if ckpt.profile != profile.name {
        return Err(TrainError::ProfileMismatch {
            checkpoint: ckpt.profile,
            features: profile.name,
        });
    }
    SynthModel::from_checkpoint(&ckpt)
}

/// Seed of the NSF excitation at `step`.
fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step as u64)
}

/// Runs one scenario. Zero-shot performs no optimizer steps and reads no
/// training audio, so `data` may be `None` for it.
pub fn run_scenario(config: &TrainConfig, data: Option<&TrainingSet>) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let model = match &config.init_checkpoint {
        Some(path) => load_init(path, config.arch, &config.profile)?,
        None => SynthModel::new(config.arch, config.model_size, config.profile, config.seed)?,
    };
    if config.scenario == Scenario::ZeroShot || config.max_steps == 0 {
        return Ok(TrainOutcome { model, losses: Vec::new() });
    }
    let data = data.ok_or(TrainError::NoTrainingData)?;
    if data.profile.name != config.profile.name {
        return Err(TrainError::ProfileMismatch {
            checkpoint: config.profile.name,
            features: data.profile.name,
        });
    }
    let mut trainer = Trainer::new(model, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(7);
    let mut losses = Vec::with_capacity(config.max_steps);
    for step in 1..=config.max_steps {
        let batch = data.random_crop(config.crop_frames(), &mut rng);
        let loss = trainer.step(&batch, step_seed(config.seed, step))?;
        log::debug!("step {step} loss {loss}");
        losses.push((step, loss));
    }
    Ok(TrainOutcome {
        model: trainer.into_model(),
        losses,
    })
}

/// Gradient check of a tiny model of `arch` on a short random utterance:
/// three frames for NSF, two blocks over two frames for WaveNet.
pub fn grad_check_tiny(arch: Arch, profile: FeatureProfile, seed: u64, step: f64, tolerance: f64) -> Result<GradCheckReport, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = match arch {
        Arch::Nsf => 3,
        Arch::WaveNet => 2,
    };
    let mel = MelSpectrogram {
        frames,
        n_mels: profile.n_mels,
        data: (0..frames * profile.n_mels).map(|_| rng.random_range(-10.0..1.0)).collect(),
        profile,
    };
    let f0: Vec<f32> = (0..frames).map(|i| if i == 1 { 0.0 } else { rng.random_range(100.0..400.0) }).collect();
    let n = frames * profile.hop;
    let audio: Vec<f32> = (0..n).map(|i| (i as f32 * 0.07).sin() * 0.2 + rng.random_range(-0.05..0.05)).collect();
    // Biases start at zero, which parks many ReLU inputs within one step of
    // the kink; random offsets keep central differences on smooth pieces.
    let offset_biases = |store: &mut ParamStore<f32>, rng: &mut ChaCha8Rng| {
        for t in store.tensors_mut().iter_mut().filter(|t| t.name.ends_with(".b")) {
            t.data.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    };
    Ok(match arch {
        Arch::Nsf => {
            let mut m = NsfModel::new(NsfConfig::tiny(profile), seed)?;
            offset_biases(m.store_mut(), &mut rng);
            m.grad_check(&mel, &f0, &audio, seed, step, tolerance)?
        }
        Arch::WaveNet => {
            let codes: Vec<u32> = audio.iter().map(|&v| mu_law_encode(v as f64)).collect();
            let mut m = WaveNetModel::new(WaveNetConfig::tiny(profile, 2), seed)?;
            offset_biases(m.store_mut(), &mut rng);
            m.grad_check(&mel, &f0, &codes, step, tolerance)?
        }
    })
}
