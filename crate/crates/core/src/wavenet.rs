//! Autoregressive WaveNet over 10-bit μ-law codes: dilated causal
//! convolutions with gated activations, a skip-sum output head, teacher
//! forced training and cached sequential sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cond::{feature_scale, infer_cond_config, tensor_shape, CondConfig, CondInput, CondNet, normalize_mel};
use crate::corpus::Waveform;
use crate::dsp::{mu_law_decode, upsample_f0_replicate, FeatureProfile, MelSpectrogram, ProfileName, QUANT_LEVELS};
use crate::graph::{grad_check, ArchId, GradCheckReport, CheckpointError, ConvSpec, Graph, GraphError, ModelCheckpoint, ParamId, ParamStore, Real, Tensor, Var};
use crate::F0_FEATURE_SCALE;

/// Dilations repeat every this many blocks.
pub const DILATION_CYCLE: usize = 10;

#[derive(Debug, Error)]
pub enum WaveNetError {
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
    #[error("code {code} at position {index} is outside [0, {max}]", max = QUANT_LEVELS - 1)]
    CodeOutOfRange { index: usize, code: u32 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("conditioning features have {found} columns, model expects {expected}")]
    FeatureDims { expected: usize, found: usize },
    #[error("input is empty")]
    Empty,
    #[error("invalid WaveNet config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveNetConfig {
    pub profile: FeatureProfile,
    pub cond: CondConfig,
    pub n_blocks: usize,
    pub kernel_size: usize,
    pub residual_channels: usize,
    pub skip_channels: usize,
}

impl WaveNetConfig {
    /// 30 blocks, 32 residual and 64 skip channels.
    pub fn desk(profile: FeatureProfile) -> Self {
        Self {
            profile,
            cond: CondConfig::new(profile.n_mels),
            n_blocks: 30,
            kernel_size: 2,
            residual_channels: 32,
            skip_channels: 64,
        }
    }

    /// 30 blocks at 64 residual and 256 skip channels.
    pub fn full(profile: FeatureProfile) -> Self {
        Self {
            residual_channels: 64,
            skip_channels: 256,
            ..Self::desk(profile)
        }
    }

    /// Small conditioning net and channels, `n_blocks` blocks.
    pub fn tiny(profile: FeatureProfile, n_blocks: usize) -> Self {
        Self {
            cond: CondConfig {
                n_mels: profile.n_mels,
                lstm_units: 2,
                conv_channels: 7,
            },
            n_blocks,
            residual_channels: 4,
            skip_channels: 4,
            ..Self::desk(profile)
        }
    }

    /// Dilation of the zero-based block `k`.
    pub fn dilation(k: usize) -> usize {
        1 << (k % DILATION_CYCLE)
    }

    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * (0..self.n_blocks).map(Self::dilation).sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), WaveNetError> {
        let bad = |m: &str| Err(WaveNetError::InvalidConfig(m.to_string()));
        if self.n_blocks == 0 || self.kernel_size < 2 {
            return bad("need at least one block and kernel size 2 or more");
        }
        if self.residual_channels == 0 || self.skip_channels == 0 {
            return bad("channel counts must be positive");
        }
        if self.cond.n_mels != self.profile.n_mels || self.cond.lstm_units == 0 {
            return bad("conditioning config does not match the profile");
        }
        Ok(())
    }
}

pub fn receptive_field(config: &WaveNetConfig) -> usize {
    config.receptive_field()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Draw from the softmax at temperature 1.
    Sample,
    /// Take the most likely code.
    Argmax,
}

#[derive(Debug, Clone, Copy)]
struct BlockIds {
    conv_w: ParamId,
    conv_b: ParamId,
    cond_w: ParamId,
    skip_w: ParamId,
    skip_b: ParamId,
    /// The last block has no residual output.
    res: Option<(ParamId, ParamId)>,
}

#[derive(Debug, Clone)]
struct Ids {
    cond: CondNet,
    in_w: ParamId,
    in_b: ParamId,
    blocks: Vec<BlockIds>,
    out1_w: ParamId,
    out1_b: ParamId,
    out2_w: ParamId,
    out2_b: ParamId,
}

impl Ids {
    fn register<T: Real>(store: &mut ParamStore<T>, c: &WaveNetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, s, k) = (c.residual_channels, c.skip_channels, c.kernel_size);
        let q = QUANT_LEVELS as usize;
        let dim = c.cond.feature_dim();
        let cond = CondNet::register(store, c.cond, &mut rng);
        let in_w = store.add_glorot("in.w", &[1, r], 1, r, &mut rng);
        let in_b = store.add_zeros("in.b", &[r]);
        let blocks = (0..c.n_blocks)
            .map(|b| {
                let p = format!("b{b}");
                let conv_w = store.add_glorot(format!("{p}.conv.w"), &[k, r, 2 * r], k * r, 2 * r, &mut rng);
                let conv_b = store.add_zeros(format!("{p}.conv.b"), &[2 * r]);
                let cond_w = store.add_glorot(format!("{p}.cond.w"), &[dim, 2 * r], dim, 2 * r, &mut rng);
                let skip_w = store.add_glorot(format!("{p}.skip.w"), &[r, s], r, s, &mut rng);
                let skip_b = store.add_zeros(format!("{p}.skip.b"), &[s]);
                let res = (b + 1 < c.n_blocks).then(|| {
                    (
                        store.add_glorot(format!("{p}.res.w"), &[r, r], r, r, &mut rng),
                        store.add_zeros(format!("{p}.res.b"), &[r]),
                    )
                });
                BlockIds {
                    conv_w,
                    conv_b,
                    cond_w,
                    skip_w,
                    skip_b,
                    res,
                }
            })
            .collect();
        Self {
            cond,
            in_w,
            in_b,
            blocks,
            out1_w: store.add_glorot("out1.w", &[s, s], s, s, &mut rng),
            out1_b: store.add_zeros("out1.b", &[s]),
            out2_w: store.add_glorot("out2.w", &[s, q], s, q, &mut rng),
            out2_b: store.add_zeros("out2.b", &[q]),
        }
    }
}

/// The network input for a code: its amplitude on a `[-1, 1]` grid.
pub fn code_to_input(code: u32) -> f64 {
    code as f64 / ((QUANT_LEVELS as f64 - 1.0) / 2.0) - 1.0
}

/// Network inputs shifted one step right, so position `t` sees codes
/// before `t` only.
fn shifted_inputs<T: Real>(codes: &[u32]) -> Tensor<T> {
    let mut x = Vec::with_capacity(codes.len());
    x.push(T::zero());
    x.extend(codes[..codes.len().saturating_sub(1)].iter().map(|&c| T::from_f(code_to_input(c))));
    x.truncate(codes.len());
    Tensor::column(x)
}

fn check_codes(codes: &[u32]) -> Result<(), WaveNetError> {
    match codes.iter().position(|&c| c >= QUANT_LEVELS) {
        Some(index) => Err(WaveNetError::CodeOutOfRange { index, code: codes[index] }),
        None => Ok(()),
    }
}

/// Training inputs for one crop.
#[derive(Debug, Clone)]
pub(crate) struct WaveNetInputs<T> {
    mel: Tensor<T>,
    f0: Tensor<T>,
    x: Tensor<T>,
    targets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct WaveNetModel {
    config: WaveNetConfig,
    store: ParamStore<f32>,
    ids: Ids,
}

impl WaveNetModel {
    pub fn new(config: WaveNetConfig, seed: u64) -> Result<Self, WaveNetError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let ids = Ids::register(&mut store, &config, seed);
        Ok(Self { config, store, ids })
    }

    pub fn config(&self) -> &WaveNetConfig {
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

    pub fn receptive_field(&self) -> usize {
        self.config.receptive_field()
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint::from_store(ArchId::WaveNet, self.config.profile.name, &self.store)
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self, WaveNetError> {
        ckpt.expect_arch(ArchId::WaveNet)?;
        let profile = FeatureProfile::by_name(ckpt.profile);
        let n_blocks = (0..).take_while(|b| ckpt.tensor(&format!("b{b}.conv.w")).is_some()).count();
        let conv = tensor_shape(ckpt, "b0.conv.w")?;
        let skip = tensor_shape(ckpt, "b0.skip.w")?;
        if conv.len() != 3 || skip.len() != 2 {
            return Err(CheckpointError::Malformed("block tensors have unexpected rank".into()).into());
        }
        let config = WaveNetConfig {
            profile,
            cond: infer_cond_config(ckpt)?,
            n_blocks,
            kernel_size: conv[0],
            residual_channels: conv[1],
            skip_channels: skip[1],
        };
        config.validate()?;
        let mut model = Self::new(config, 0)?;
        ckpt.copy_into(&mut model.store)?;
        Ok(model)
    }

    fn check_mel(&self, mel: &MelSpectrogram, frame_f0: &[f32]) -> Result<(), WaveNetError> {
        let c = &self.config;
        if mel.profile.name != c.profile.name {
            return Err(WaveNetError::ProfileMismatch {
                expected: c.profile.name,
                found: mel.profile.name,
            });
        }
        if mel.n_mels != c.cond.n_mels {
            return Err(WaveNetError::MelDims {
                expected: c.cond.n_mels,
                found: mel.n_mels,
            });
        }
        if mel.frames != frame_f0.len() {
            return Err(WaveNetError::FrameMismatch {
                mel: mel.frames,
                f0: frame_f0.len(),
            });
        }
        if mel.frames == 0 {
            return Err(WaveNetError::Empty);
        }
        Ok(())
    }

    /// Per-sample conditioning `[frames * hop, feature_dim]`, raw F0 in
    /// the last column.
    pub fn conditioning_forward(&self, mel: &MelSpectrogram, frame_f0: &[f32]) -> Result<Tensor<f32>, WaveNetError> {
        self.check_mel(mel, frame_f0)?;
        let mut g = Graph::new();
        let m = g.input(Tensor::from_vec(mel.frames, mel.n_mels, mel.data.iter().map(|&v| normalize_mel(v)).collect()));
        let f = g.input(Tensor::column(frame_f0.to_vec()));
        let feats = self.ids.cond.forward(&mut g, &self.store, m, f)?;
        let rep = g.repeat_rows(feats, self.config.profile.hop)?;
        debug_assert_eq!(g.value(rep).rows, upsample_f0_replicate(frame_f0, self.config.profile.hop).len());
        Ok(g.value(rep).clone())
    }

    /// Logits `[T, 1024]` for codes `[T]` under per-sample features.
    pub fn teacher_forced_forward(&self, codes: &[u32], cond: &Tensor<f32>) -> Result<Tensor<f32>, WaveNetError> {
        self.teacher_forced_with(&self.store, codes, cond)
    }

    /// Same as `teacher_forced_forward` with weights and arithmetic in f64,
    /// which keeps tiny far-field effects visible.
    pub fn teacher_forced_forward_f64(&self, codes: &[u32], cond: &Tensor<f32>) -> Result<Tensor<f64>, WaveNetError> {
        self.teacher_forced_with(&self.store.cast::<f64>(), codes, cond)
    }

    fn teacher_forced_with<T: Real>(&self, store: &ParamStore<T>, codes: &[u32], cond: &Tensor<f32>) -> Result<Tensor<T>, WaveNetError> {
        check_codes(codes)?;
        self.check_features(cond)?;
        if cond.rows != codes.len() {
            return Err(WaveNetError::LengthMismatch(codes.len(), cond.rows));
        }
        let mut g = Graph::new();
        let feats = g.input(cond.cast::<T>());
        let scale = feature_scale(&mut g, self.config.cond.feature_dim());
        let scaled = g.mul(feats, scale)?;
        let x = g.input(shifted_inputs(codes));
        let logits = self.logits_graph(&mut g, store, x, CondInput::Samples(scaled))?;
        Ok(g.value(logits).clone())
    }

    fn check_features(&self, cond: &Tensor<f32>) -> Result<(), WaveNetError> {
        let dim = self.config.cond.feature_dim();
        if cond.cols != dim {
            return Err(WaveNetError::FeatureDims {
                expected: dim,
                found: cond.cols,
            });
        }
        Ok(())
    }

    fn logits_graph<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, cond: CondInput) -> Result<Var, GraphError> {
        let c = &self.config;
        let p = |g: &mut Graph<T>, id| g.param(store, id);
        g.set_scope("wavenet input");
        let (w, b) = (p(g, self.ids.in_w), p(g, self.ids.in_b));
        let mut h = g.dense(x, w, Some(b))?;
        let mut skip: Option<Var> = None;
        for (k, ids) in self.ids.blocks.iter().enumerate() {
            g.set_scope(format!("wavenet block {k}"));
            let (cw, cb) = (p(g, ids.conv_w), p(g, ids.conv_b));
            let a = g.conv1d(h, cw, Some(cb), ConvSpec::causal(c.kernel_size, WaveNetConfig::dilation(k)))?;
            let kw = p(g, ids.cond_w);
            let cp = cond.project(g, kw)?;
            let a = g.add(a, cp)?;
            let z = g.gated(a)?;
            let (sw, sb) = (p(g, ids.skip_w), p(g, ids.skip_b));
            let s = g.dense(z, sw, Some(sb))?;
            skip = Some(match skip {
                Some(acc) => g.add(acc, s)?,
                None => s,
            });
            if let Some((rw, rb)) = ids.res {
                let (rw, rb) = (p(g, rw), p(g, rb));
                let r = g.dense(z, rw, Some(rb))?;
                h = g.add(h, r)?;
            }
        }
        g.set_scope("wavenet output");
        let o = g.relu(skip.expect("at least one block"));
        let (w1, b1) = (p(g, self.ids.out1_w), p(g, self.ids.out1_b));
        let o = g.dense(o, w1, Some(b1))?;
        let o = g.relu(o);
        let (w2, b2) = (p(g, self.ids.out2_w), p(g, self.ids.out2_b));
        g.dense(o, w2, Some(b2))
    }

    /// Checks a training crop: `frames` mel rows and `frames * hop` codes.
    pub(crate) fn prepare<T: Real>(&self, mel: &MelSpectrogram, frame_f0: &[f32], codes: &[u32]) -> Result<WaveNetInputs<T>, WaveNetError> {
        self.check_mel(mel, frame_f0)?;
        check_codes(codes)?;
        let n = mel.frames * self.config.profile.hop;
        if codes.len() != n {
            return Err(WaveNetError::LengthMismatch(codes.len(), n));
        }
        Ok(WaveNetInputs {
            mel: Tensor::from_vec(mel.frames, mel.n_mels, mel.data.iter().map(|&v| normalize_mel(v)).collect()),
            f0: Tensor::column(frame_f0.iter().map(|&v| T::from_f(v as f64)).collect()),
            x: shifted_inputs(codes),
            targets: codes.iter().map(|&c| c as usize).collect(),
        })
    }

    /// Mean cross-entropy of a crop, conditioning computed inside the graph.
    pub(crate) fn loss_graph<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: &WaveNetInputs<T>) -> Result<Var, GraphError> {
        let mel = g.input(x.mel.clone());
        let f0 = g.input(x.f0.clone());
        let feats = self.ids.cond.forward(g, store, mel, f0)?;
        let scale = feature_scale(g, self.config.cond.feature_dim());
        let scaled = g.mul(feats, scale)?;
        let input = g.input(x.x.clone());
        let cond = CondInput::Frames {
            feats: scaled,
            hop: self.config.profile.hop,
        };
        let logits = self.logits_graph(g, store, input, cond)?;
        g.set_scope("loss");
        g.softmax_cross_entropy(logits, &x.targets)
    }

    /// Compares backward against central differences in 64-bit on one
    /// crop of `frames * hop` codes.
    pub fn grad_check(
        &self,
        mel: &MelSpectrogram,
        frame_f0: &[f32],
        codes: &[u32],
        step: f64,
        tolerance: f64,
    ) -> Result<GradCheckReport, WaveNetError> {
        let x: WaveNetInputs<f64> = self.prepare(mel, frame_f0, codes)?;
        let mut store = self.store.cast::<f64>();
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| self.loss_graph(g, s, &x);
        Ok(grad_check(&mut store, &build, step, tolerance)?)
    }

    /// Generates one code per conditioning row. The first `prompt.len()`
    /// codes are forced to the prompt.
    pub fn generate_codes(&self, cond: &Tensor<f32>, seed: u64, mode: SampleMode, prompt: &[u32]) -> Result<Vec<u32>, WaveNetError> {
        self.check_features(cond)?;
        check_codes(prompt)?;
        let mut sampler = Sampler::new(self);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut codes = Vec::with_capacity(cond.rows);
        let mut prev = 0.0f32;
        for t in 0..cond.rows {
            let logits = sampler.step(prev, cond.row(t));
            let code = match prompt.get(t) {
                Some(&c) => c,
                None => pick(logits, mode, &mut rng),
            };
            codes.push(code);
            prev = code_to_input(code) as f32;
        }
        Ok(codes)
    }

    /// Free-running synthesis, one sample per conditioning row.
    pub fn sample_autoregressive(&self, cond: &Tensor<f32>, seed: u64, mode: SampleMode) -> Result<Waveform, WaveNetError> {
        let codes = self.generate_codes(cond, seed, mode, &[])?;
        let samples = codes
            .iter()
            .map(|&c| mu_law_decode(c).map(|v| v as f32))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| WaveNetError::InvalidConfig(e.to_string()))?;
        Waveform::new(samples, self.config.profile.sample_rate).map_err(|e| WaveNetError::InvalidConfig(e.to_string()))
    }
}

/// Mean negative log-likelihood of `targets` under `logits`.
pub fn cross_entropy_loss(logits: &Tensor<f32>, targets: &[u32]) -> Result<f64, WaveNetError> {
    if logits.rows != targets.len() {
        return Err(WaveNetError::LengthMismatch(logits.rows, targets.len()));
    }
    if targets.is_empty() {
        return Err(WaveNetError::Empty);
    }
    let mut total = 0.0;
    for (t, &c) in targets.iter().enumerate() {
        let row = logits.row(t);
        if c as usize >= row.len() {
            return Err(WaveNetError::CodeOutOfRange { index: t, code: c });
        }
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
        let lse = max + row.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
        total += lse - row[c as usize] as f64;
    }
    Ok(total / targets.len() as f64)
}

fn pick(logits: &[f32], mode: SampleMode, rng: &mut ChaCha8Rng) -> u32 {
    let argmax = || (0..logits.len()).fold(0, |best, i| if logits[i] > logits[best] { i } else { best });
    match mode {
        SampleMode::Argmax => argmax() as u32,
        SampleMode::Sample => {
            let max = logits[argmax()];
            let probs: Vec<f64> = logits.iter().map(|&l| ((l - max) as f64).exp()).collect();
            let mut u = rng.random::<f64>() * probs.iter().sum::<f64>();
            for (i, p) in probs.iter().enumerate() {
                if u < *p {
                    return i as u32;
                }
                u -= p;
            }
            argmax() as u32
        }
    }
}

/// `y += v * W` for a row-major `W` with `y.len()` columns.
fn vec_mat(v: &[f32], w: &[f32], y: &mut [f32]) {
    let cols = y.len();
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0.0 {
            for (yj, &wj) in y.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
                *yj += vi * wj;
            }
        }
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn data(m: &WaveNetModel, id: ParamId) -> &[f32] {
    &m.store.get(id).data
}

/// Incremental forward pass that keeps each block's input history in a
/// ring buffer, so one step costs one output position.
struct Sampler<'a> {
    model: &'a WaveNetModel,
    t: usize,
    /// Per block: ring of past block inputs, `len * R` values.
    history: Vec<Vec<f32>>,
    /// Per block: conditioning projection of the last distinct row.
    cond_proj: Vec<Vec<f32>>,
    last_row: Vec<f32>,
    scale: Vec<f32>,
    logits: Vec<f32>,
}

impl<'a> Sampler<'a> {
    fn new(model: &'a WaveNetModel) -> Self {
        let c = &model.config;
        let r = c.residual_channels;
        let history = (0..c.n_blocks)
            .map(|k| vec![0.0; ((c.kernel_size - 1) * WaveNetConfig::dilation(k) + 1) * r])
            .collect();
        let dim = c.cond.feature_dim();
        let mut scale = vec![1.0; dim];
        scale[dim - 1] = F0_FEATURE_SCALE as f32;
        Self {
            model,
            t: 0,
            history,
            cond_proj: vec![vec![0.0; 2 * r]; c.n_blocks],
            last_row: Vec::new(),
            scale,
            logits: vec![0.0; QUANT_LEVELS as usize],
        }
    }

    fn step(&mut self, prev: f32, cond_row: &[f32]) -> &[f32] {
        let m = self.model;
        let c = &m.config;
        let (r, s, kernel) = (c.residual_channels, c.skip_channels, c.kernel_size);
        if cond_row != self.last_row.as_slice() {
            let scaled: Vec<f32> = cond_row.iter().zip(&self.scale).map(|(a, b)| a * b).collect();
            for (k, ids) in m.ids.blocks.iter().enumerate() {
                let proj = &mut self.cond_proj[k];
                proj.iter_mut().for_each(|v| *v = 0.0);
                vec_mat(&scaled, data(m, ids.cond_w), proj);
            }
            self.last_row = cond_row.to_vec();
        }
        let mut h: Vec<f32> = data(m, m.ids.in_b).to_vec();
        for (hj, &wj) in h.iter_mut().zip(data(m, m.ids.in_w)) {
            *hj += prev * wj;
        }
        let mut skip = vec![0.0f32; s];
        let mut a = vec![0.0f32; 2 * r];
        let t = self.t;
        for (k, ids) in m.ids.blocks.iter().enumerate() {
            let d = WaveNetConfig::dilation(k);
            let ring_len = (kernel - 1) * d + 1;
            self.history[k][(t % ring_len) * r..(t % ring_len + 1) * r].copy_from_slice(&h);
            a.copy_from_slice(data(m, ids.conv_b));
            for (x, y) in a.iter_mut().zip(&self.cond_proj[k]) {
                *x += y;
            }
            let w = data(m, ids.conv_w);
            for tap in 0..kernel {
                let back = (kernel - 1 - tap) * d;
                if back > t {
                    continue;
                }
                let slot = (t - back) % ring_len;
                let past = &self.history[k][slot * r..(slot + 1) * r];
                vec_mat(past, &w[tap * r * 2 * r..(tap + 1) * r * 2 * r], &mut a);
            }
            let z: Vec<f32> = (0..r).map(|j| a[j].tanh() * sigmoid(a[r + j])).collect();
            for (x, &b) in skip.iter_mut().zip(data(m, ids.skip_b)) {
                *x += b;
            }
            vec_mat(&z, data(m, ids.skip_w), &mut skip);
            if let Some((rw, rb)) = ids.res {
                for (x, &b) in h.iter_mut().zip(data(m, rb)) {
                    *x += b;
                }
                vec_mat(&z, data(m, rw), &mut h);
            }
        }
        skip.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut o: Vec<f32> = data(m, m.ids.out1_b).to_vec();
        vec_mat(&skip, data(m, m.ids.out1_w), &mut o);
        o.iter_mut().for_each(|v| *v = v.max(0.0));
        self.logits.copy_from_slice(data(m, m.ids.out2_b));
        vec_mat(&o, data(m, m.ids.out2_w), &mut self.logits);
        self.t += 1;
        &self.logits
    }
}
