//! Harmonic-plus-noise neural source-filter synthesizer with a trainable
//! maximum voiced frequency.

mod block;
mod source;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cond::{feature_scale, CondInput, infer_cond_config, tensor_shape, CondConfig, CondNet, RecurrentConv, F0_FEATURE_SCALE, normalize_mel};
use crate::corpus::Waveform;
use crate::dsp::{upsample_f0_replicate, FeatureProfile, MelSpectrogram, ProfileName};
use crate::graph::{
    grad_check, hamming, multires_stft_loss as spectral_loss, GradCheckReport, sinc_lowpass, ArchId, CheckpointError, Graph, GraphError,
    ModelCheckpoint, ParamStore, Real, Tensor, Var, DEFAULT_RESOLUTIONS,
};

use block::BlockIds;
pub use source::{source_excitation, unvoiced_std, SourceExcitation};

#[derive(Debug, Error)]
pub enum NsfError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("mel has {mel} frames but F0 has {f0}")]
    FrameMismatch { mel: usize, f0: usize },
    #[error("mel has {found} bins, model expects {expected}")]
    MelDims { expected: usize, found: usize },
    #[error("mel uses profile {found}, model expects {expected}")]
    ProfileMismatch { expected: ProfileName, found: ProfileName },
    #[error("input has no frames")]
    Empty,
    #[error("F0 {value} Hz at sample {index} is at or above Nyquist ({nyquist} Hz)")]
    F0AboveNyquist { index: usize, value: f32, nyquist: f64 },
    #[error("F0 {value} at sample {index} is negative or not a number")]
    InvalidF0 { index: usize, value: f32 },
    #[error("length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),
    #[error("invalid NSF config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsfConfig {
    pub profile: FeatureProfile,
    pub cond: CondConfig,
    pub n_harmonic_blocks: usize,
    pub n_noise_blocks: usize,
    /// Layer `l` of every block uses dilation `2^l`.
    pub conv_layers_per_block: usize,
    pub channels: usize,
    /// LSTM units per direction in the MVF head.
    pub mvf_units: usize,
    /// Sine amplitude α of the harmonic source.
    pub sine_amplitude: f64,
    /// Standard deviation σ of the noise added to voiced excitation.
    pub noise_std: f64,
    pub sinc_taps: usize,
}

impl NsfConfig {
    /// 64 channels, five layers per block.
    pub fn desk(profile: FeatureProfile) -> Self {
        Self {
            profile,
            cond: CondConfig::new(profile.n_mels),
            n_harmonic_blocks: 5,
            n_noise_blocks: 1,
            conv_layers_per_block: 5,
            channels: 64,
            mvf_units: 32,
            sine_amplitude: 0.1,
            noise_std: 0.003,
            sinc_taps: 63,
        }
    }

    /// 128 channels, ten layers per block (dilations up to 512).
    pub fn full(profile: FeatureProfile) -> Self {
        Self {
            channels: 128,
            conv_layers_per_block: 10,
            ..Self::desk(profile)
        }
    }

    /// A few thousand parameters, for gradient checks and smoke runs.
    pub fn tiny(profile: FeatureProfile) -> Self {
        Self {
            cond: CondConfig {
                n_mels: profile.n_mels,
                lstm_units: 2,
                conv_channels: 7,
            },
            conv_layers_per_block: 2,
            channels: 4,
            mvf_units: 2,
            ..Self::desk(profile)
        }
    }

    pub fn dilations(&self) -> Vec<usize> {
        (0..self.conv_layers_per_block).map(|l| 1usize << l).collect()
    }

    /// Samples on each side of a position that one filter block reads.
    pub fn block_reach(&self) -> usize {
        self.dilations().iter().sum()
    }

    pub fn nyquist(&self) -> f64 {
        self.profile.sample_rate as f64 / 2.0
    }

    pub fn validate(&self) -> Result<(), NsfError> {
        let bad = |m: &str| Err(NsfError::InvalidConfig(m.to_string()));
        if self.n_harmonic_blocks != 5 {
            return bad("the harmonic branch has exactly five blocks");
        }
        if self.n_noise_blocks == 0 {
            return bad("need at least one noise block");
        }
        if self.sinc_taps.is_multiple_of(2) {
            return bad("sinc_taps must be odd");
        }
        if !(self.sine_amplitude > 0.0 && self.noise_std > 0.0) {
            return bad("sine amplitude and noise std must be positive");
        }
        if self.channels < 2 || !self.channels.is_multiple_of(2) {
            return bad("channels must be even and at least 2");
        }
        if self.conv_layers_per_block == 0 || self.mvf_units == 0 || self.cond.lstm_units == 0 {
            return bad("layer counts and unit counts must be positive");
        }
        if self.cond.n_mels != self.profile.n_mels {
            return bad("conditioning mel count differs from the profile");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct NsfIds {
    cond: CondNet,
    mvf: RecurrentConv,
    harmonic: Vec<BlockIds>,
    noise: Vec<BlockIds>,
}

impl NsfIds {
    fn register<T: Real>(store: &mut ParamStore<T>, c: &NsfConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cond = CondNet::register(store, c.cond, &mut rng);
        let mvf = RecurrentConv::register(store, "mvf", c.cond.n_mels + 1, c.mvf_units, 1, &mut rng);
        let dil = c.dilations();
        let dim = c.cond.feature_dim();
        let harmonic = (0..c.n_harmonic_blocks)
            .map(|k| BlockIds::register(store, &format!("h{k}"), c.channels, &dil, dim, &mut rng))
            .collect();
        let noise = (0..c.n_noise_blocks)
            .map(|k| BlockIds::register(store, &format!("n{k}"), c.channels, &dil, dim, &mut rng))
            .collect();
        Self { cond, mvf, harmonic, noise }
    }
}

/// Validated graph inputs for one utterance or crop.
#[derive(Debug, Clone)]
pub(crate) struct NsfInputs<T> {
    frames: usize,
    mel: Tensor<T>,
    f0: Tensor<T>,
    /// Mel frames with the scaled F0 appended, for the MVF head.
    mvf_in: Tensor<T>,
    harmonic: Tensor<T>,
    noise: Tensor<T>,
}

/// Frame-rate outputs of the condition module.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionOutput {
    /// `[frames * hop, feature_dim]`, F0 in Hz in the last column.
    pub features: Tensor<f32>,
    /// F0 repeated to sample rate.
    pub f0: Vec<f32>,
    /// Maximum voiced frequency per frame, in Hz.
    pub mvf: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct NsfModel {
    config: NsfConfig,
    store: ParamStore<f32>,
    ids: NsfIds,
}

/// Frames synthesized per graph in chunked inference.
const CHUNK_FRAMES: usize = 16;

impl NsfModel {
    /// Randomly initialised model.
    pub fn new(config: NsfConfig, seed: u64) -> Result<Self, NsfError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let ids = NsfIds::register(&mut store, &config, seed);
        Ok(Self { config, store, ids })
    }

    pub fn config(&self) -> &NsfConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<f32> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.store
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_elements()
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint::from_store(ArchId::Nsf, self.config.profile.name, &self.store)
    }

    /// Rebuilds the architecture from tensor shapes and loads the weights.
    /// Source and filter constants take their default values.
    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self, NsfError> {
        ckpt.expect_arch(ArchId::Nsf)?;
        let profile = FeatureProfile::by_name(ckpt.profile);
        let cond = infer_cond_config(ckpt)?;
        let count = |prefix: &str| (0..).take_while(|k| ckpt.tensor(&format!("{prefix}{k}.in.w")).is_some()).count();
        let layers = (0..).take_while(|l| ckpt.tensor(&format!("h0.l{l}.conv.w")).is_some()).count();
        let channels = *tensor_shape(ckpt, "h0.in.w")?
            .last()
            .ok_or_else(|| CheckpointError::Malformed("h0.in.w has rank 0".into()))?;
        let mvf_units = tensor_shape(ckpt, "mvf.lstm_fw.whh")?[0];
        let config = NsfConfig {
            cond,
            n_harmonic_blocks: count("h"),
            n_noise_blocks: count("n"),
            conv_layers_per_block: layers,
            channels,
            mvf_units,
            ..NsfConfig::desk(profile)
        };
        config.validate()?;
        let mut model = Self::new(config, 0)?;
        ckpt.copy_into(&mut model.store)?;
        Ok(model)
    }

    pub(crate) fn prepare<T: Real>(&self, mel: &MelSpectrogram, frame_f0: &[f32], seed: u64) -> Result<NsfInputs<T>, NsfError> {
        let c = &self.config;
        if mel.profile.name != c.profile.name {
            return Err(NsfError::ProfileMismatch {
                expected: c.profile.name,
                found: mel.profile.name,
            });
        }
        if mel.n_mels != c.cond.n_mels {
            return Err(NsfError::MelDims {
                expected: c.cond.n_mels,
                found: mel.n_mels,
            });
        }
        prepare_raw(c, mel.frames, &mel.data, frame_f0, seed)
    }

    /// Frame-stage plus sample-stage graph for one set of inputs.
    pub(crate) fn forward_graph<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: &NsfInputs<T>,
    ) -> Result<Var, GraphError> {
        let (feats, mvf) = self.frame_stage(g, store, x)?;
        let harmonic = g.input(x.harmonic.clone());
        let noise = g.input(x.noise.clone());
        self.sample_stage(g, store, feats, mvf, harmonic, noise)
    }

    fn frame_stage<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: &NsfInputs<T>) -> Result<(Var, Var), GraphError> {
        let mel = g.input(x.mel.clone());
        let f0 = g.input(x.f0.clone());
        let feats = self.ids.cond.forward(g, store, mel, f0)?;
        g.set_scope("mvf");
        let mvf_in = g.input(x.mvf_in.clone());
        let raw = self.ids.mvf.forward(g, store, mvf_in)?;
        let squashed = g.sigmoid(raw);
        let mvf = g.scale(squashed, T::from_f(self.config.nyquist()));
        Ok((feats, mvf))
    }

    /// `feats` are raw frame-rate conditioning features; `mvf` is `[F, 1]`.
    fn sample_stage<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        feats: Var,
        mvf: Var,
        harmonic: Var,
        noise: Var,
    ) -> Result<Var, GraphError> {
        let c = &self.config;
        let hop = c.profile.hop;
        let scale = feature_scale(g, c.cond.feature_dim());
        let scaled = g.mul(feats, scale)?;
        let cond = CondInput::Frames { feats: scaled, hop };
        let mut e = harmonic;
        for (k, b) in self.ids.harmonic.iter().enumerate() {
            g.set_scope(format!("harmonic block {k}"));
            e = b.forward(g, store, e, cond)?;
        }
        let mut n = noise;
        for (k, b) in self.ids.noise.iter().enumerate() {
            g.set_scope(format!("noise block {k}"));
            n = b.forward(g, store, n, cond)?;
        }
        g.set_scope("sinc filters");
        let lp = g.sinc_lowpass(mvf, c.sinc_taps, c.profile.sample_rate as f64)?;
        let frames = g.value(mvf).rows;
        let delta = g.input(delta_rows(frames, c.sinc_taps));
        let hp = g.sub(delta, lp)?;
        let low = g.frame_fir(e, lp, hop)?;
        let high = g.frame_fir(n, hp, hop)?;
        g.add(low, high)
    }

    /// Condition module: features repeated to sample rate, per-sample F0
    /// and per-frame MVF.
    pub fn condition_forward(&self, mel: &MelSpectrogram, frame_f0: &[f32]) -> Result<ConditionOutput, NsfError> {
        let x: NsfInputs<f32> = self.prepare(mel, frame_f0, 0)?;
        let mut g = Graph::new();
        let (feats, mvf) = self.frame_stage(&mut g, &self.store, &x)?;
        let rep = g.repeat_rows(feats, self.config.profile.hop)?;
        Ok(ConditionOutput {
            features: g.value(rep).clone(),
            f0: upsample_f0_replicate(frame_f0, self.config.profile.hop),
            mvf: g.value(mvf).data.clone(),
        })
    }

    /// One filter block applied standalone to `excitation` with per-sample
    /// features `[len, feature_dim]` (raw F0 in the last column).
    /// `block` indexes the harmonic blocks, then the noise blocks.
    pub fn filter_block_forward(&self, block: usize, excitation: &[f32], features: &Tensor<f32>) -> Result<Vec<f32>, NsfError> {
        if features.rows != excitation.len() {
            return Err(NsfError::LengthMismatch(excitation.len(), features.rows));
        }
        let ids = self
            .ids
            .harmonic
            .iter()
            .chain(&self.ids.noise)
            .nth(block)
            .ok_or_else(|| NsfError::InvalidConfig(format!("no filter block {block}")))?;
        let mut g = Graph::new();
        let e = g.input(Tensor::column(excitation.to_vec()));
        let f = g.input(features.clone());
        let scale = feature_scale(&mut g, self.config.cond.feature_dim());
        let scaled = g.mul(f, scale)?;
        let y = ids.forward(&mut g, &self.store, e, CondInput::Samples(scaled))?;
        Ok(g.value(y).data.clone())
    }

    /// Synthesizes `frames * hop` samples. Deterministic in `seed`.
    pub fn forward(&self, mel: &MelSpectrogram, frame_f0: &[f32], seed: u64) -> Result<Waveform, NsfError> {
        let x: NsfInputs<f32> = self.prepare(mel, frame_f0, seed)?;
        let samples = self.forward_chunked(&x)?;
        Waveform::new(samples, self.config.profile.sample_rate)
            .map_err(|e| NsfError::InvalidConfig(format!("model produced an invalid waveform: {e}")))
    }

    /// Runs the sample stage over overlapping chunks so memory stays
    /// bounded; margins cover the full non-causal reach, so every kept
    /// sample sees exactly the context of a whole-utterance pass.
    fn forward_chunked(&self, x: &NsfInputs<f32>) -> Result<Vec<f32>, NsfError> {
        let c = &self.config;
        let hop = c.profile.hop;
        let mut g = Graph::new();
        let (feats, mvf) = self.frame_stage(&mut g, &self.store, x)?;
        let (feats, mvf) = (g.value(feats).clone(), g.value(mvf).clone());
        let reach = c.n_harmonic_blocks.max(c.n_noise_blocks) * c.block_reach() + c.sinc_taps / 2;
        let margin = reach.div_ceil(hop);
        let frames = x.frames;
        let mut out = Vec::with_capacity(frames * hop);
        let mut start = 0;
        while start < frames {
            let end = (start + CHUNK_FRAMES).min(frames);
            let (lo, hi) = (start.saturating_sub(margin), (end + margin).min(frames));
            let rows = |t: &Tensor<f32>, a: usize, b: usize| Tensor::from_vec(b - a, t.cols, t.data[a * t.cols..b * t.cols].to_vec());
            let mut g = Graph::new();
            let fv = g.input(rows(&feats, lo, hi));
            let mv = g.input(rows(&mvf, lo, hi));
            let hv = g.input(rows(&x.harmonic, lo * hop, hi * hop));
            let nv = g.input(rows(&x.noise, lo * hop, hi * hop));
            let y = self.sample_stage(&mut g, &self.store, fv, mv, hv, nv)?;
            let y = &g.value(y).data;
            out.extend_from_slice(&y[(start - lo) * hop..(end - lo) * hop]);
            start = end;
        }
        Ok(out)
    }

    /// Multi-resolution spectral loss of the whole-utterance output
    /// against `target`.
    pub fn loss(&self, mel: &MelSpectrogram, frame_f0: &[f32], target: &[f32], seed: u64) -> Result<f64, NsfError> {
        let y = self.forward(mel, frame_f0, seed)?;
        multires_stft_loss(&y.samples, target)
    }

    /// Builds the training graph for one crop and returns the loss node.
    pub(crate) fn loss_graph<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: &NsfInputs<T>,
        target: &[T],
    ) -> Result<Var, NsfError> {
        if target.len() != x.harmonic.rows {
            return Err(NsfError::LengthMismatch(target.len(), x.harmonic.rows));
        }
        Ok(self.loss_var(g, store, x, target)?)
    }

    fn loss_var<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: &NsfInputs<T>, target: &[T]) -> Result<Var, GraphError> {
        let wave = self.forward_graph(g, store, x)?;
        g.set_scope("loss");
        g.stft_loss(wave, target, &DEFAULT_RESOLUTIONS)
    }

    /// Compares backward against central differences in 64-bit on one
    /// utterance, covering every parameter including the MVF head.
    pub fn grad_check(
        &self,
        mel: &MelSpectrogram,
        frame_f0: &[f32],
        target: &[f32],
        seed: u64,
        step: f64,
        tolerance: f64,
    ) -> Result<GradCheckReport, NsfError> {
        let x: NsfInputs<f64> = self.prepare(mel, frame_f0, seed)?;
        if target.len() != x.harmonic.rows {
            return Err(NsfError::LengthMismatch(target.len(), x.harmonic.rows));
        }
        let target: Vec<f64> = target.iter().map(|&v| v as f64).collect();
        let mut store = self.store.cast::<f64>();
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| self.loss_var(g, s, &x, &target);
        Ok(grad_check(&mut store, &build, step, tolerance)?)
    }
}

/// Checks inputs and draws the source excitation.
pub(crate) fn prepare_raw<T: Real>(
    c: &NsfConfig,
    frames: usize,
    mel: &[f32],
    frame_f0: &[f32],
    seed: u64,
) -> Result<NsfInputs<T>, NsfError> {
    if frames != frame_f0.len() {
        return Err(NsfError::FrameMismatch {
            mel: frames,
            f0: frame_f0.len(),
        });
    }
    if frames == 0 {
        return Err(NsfError::Empty);
    }
    let n_mels = c.cond.n_mels;
    if mel.len() != frames * n_mels {
        return Err(NsfError::MelDims {
            expected: n_mels,
            found: mel.len() / frames,
        });
    }
    let per_sample = upsample_f0_replicate(frame_f0, c.profile.hop);
    let src = source_excitation(&per_sample, c.profile.sample_rate, c.sine_amplitude, c.noise_std, seed)?;
    let cast = |v: &[f32]| v.iter().map(|&x| T::from_f(x as f64)).collect::<Vec<T>>();
    let mut mvf_in = Vec::with_capacity(frames * (n_mels + 1));
    for (row, &f0) in mel.chunks_exact(n_mels).zip(frame_f0) {
        mvf_in.extend(row.iter().map(|&v| normalize_mel::<T>(v)));
        mvf_in.push(T::from_f(f0 as f64 * F0_FEATURE_SCALE));
    }
    Ok(NsfInputs {
        frames,
        mel: Tensor::from_vec(frames, n_mels, mel.iter().map(|&v| normalize_mel(v)).collect()),
        f0: Tensor::column(cast(frame_f0)),
        mvf_in: Tensor::from_vec(frames, n_mels + 1, mvf_in),
        harmonic: Tensor::column(cast(&src.harmonic)),
        noise: Tensor::column(cast(&src.noise)),
    })
}

fn delta_rows<T: Real>(frames: usize, taps: usize) -> Tensor<T> {
    let mut d = Tensor::zeros(frames, taps);
    for f in 0..frames {
        d.data[f * taps + taps / 2] = T::one();
    }
    d
}

/// Per-frame low-pass and complementary high-pass coefficients,
/// `frames x taps` each, for cutoffs `mvf_hz`.
pub fn sinc_filter_pair(mvf_hz: &[f32], taps: usize, sample_rate: u32) -> (Vec<f64>, Vec<f64>) {
    let window = hamming(taps);
    let mut lp = Vec::with_capacity(mvf_hz.len() * taps);
    let mut hp = Vec::with_capacity(mvf_hz.len() * taps);
    for &fc in mvf_hz {
        let (h, _) = sinc_lowpass(fc as f64, taps, sample_rate as f64, &window);
        hp.extend(h.iter().enumerate().map(|(j, &v)| if j == taps / 2 { 1.0 - v } else { -v }));
        lp.extend(h);
    }
    (lp, hp)
}

/// Training loss between two equal-length waveforms.
pub fn multires_stft_loss(generated: &[f32], target: &[f32]) -> Result<f64, NsfError> {
    if generated.len() != target.len() {
        return Err(NsfError::LengthMismatch(generated.len(), target.len()));
    }
    let a: Vec<f64> = generated.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = target.iter().map(|&v| v as f64).collect();
    Ok(spectral_loss(&a, &b, &DEFAULT_RESOLUTIONS))
}
