//! Frame-rate conditioning network shared by both synthesizers: a
//! bidirectional LSTM over the mel frames, a kernel-3 convolution, and the
//! frame F0 appended as the last channel.

use rand::Rng;

use crate::graph::{CheckpointError, ModelCheckpoint, ConvSpec, Graph, GraphError, LstmVars, ParamId, ParamStore, Real, Tensor, Var};

/// Consumers of the conditioning features multiply the raw-Hz F0 channel
/// by this before any learned projection.
pub const F0_FEATURE_SCALE: f64 = 1e-3;

/// Log-mel values enter the networks as `(v - MEL_CENTER) / MEL_SPREAD`.
pub const MEL_CENTER: f64 = -5.0;
pub const MEL_SPREAD: f64 = 4.0;

pub(crate) fn normalize_mel<T: Real>(v: f32) -> T {
    T::from_f((v as f64 - MEL_CENTER) / MEL_SPREAD)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CondConfig {
    pub n_mels: usize,
    /// LSTM units per direction.
    pub lstm_units: usize,
    /// Convolution output channels; the feature width is this plus one.
    pub conv_channels: usize,
}

impl CondConfig {
    pub fn new(n_mels: usize) -> Self {
        Self {
            n_mels,
            lstm_units: 32,
            conv_channels: 63,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.conv_channels + 1
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmIds {
    pub wih: ParamId,
    pub whh: ParamId,
    pub b: ParamId,
}

impl LstmIds {
    pub fn register<T: Real, R: Rng>(store: &mut ParamStore<T>, prefix: &str, n_in: usize, units: usize, rng: &mut R) -> Self {
        let lim = 1.0 / (units as f64).sqrt();
        Self {
            wih: store.add_uniform(format!("{prefix}.wih"), &[n_in, 4 * units], 1.0 / (n_in as f64).sqrt(), rng),
            whh: store.add_uniform(format!("{prefix}.whh"), &[units, 4 * units], lim, rng),
            b: store.add_zeros(format!("{prefix}.b"), &[4 * units]),
        }
    }

    pub fn vars<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>) -> LstmVars {
        LstmVars {
            wih: g.param(store, self.wih),
            whh: g.param(store, self.whh),
            b: g.param(store, self.b),
        }
    }
}

/// Bidirectional LSTM followed by a same-padded kernel-3 convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RecurrentConv {
    pub fw: LstmIds,
    pub bw: LstmIds,
    pub conv_w: ParamId,
    pub conv_b: ParamId,
}

impl RecurrentConv {
    pub fn register<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        n_in: usize,
        units: usize,
        out: usize,
        rng: &mut R,
    ) -> Self {
        let fw = LstmIds::register(store, &format!("{prefix}.lstm_fw"), n_in, units, rng);
        let bw = LstmIds::register(store, &format!("{prefix}.lstm_bw"), n_in, units, rng);
        let conv_w = store.add_glorot(format!("{prefix}.conv.w"), &[3, 2 * units, out], 3 * 2 * units, out, rng);
        let conv_b = store.add_zeros(format!("{prefix}.conv.b"), &[out]);
        Self { fw, bw, conv_w, conv_b }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var, GraphError> {
        let fw = self.fw.vars(g, store);
        let bw = self.bw.vars(g, store);
        let h = g.bilstm(x, fw, bw)?;
        let w = g.param(store, self.conv_w);
        let b = g.param(store, self.conv_b);
        g.conv1d(h, w, Some(b), ConvSpec::same(3, 1))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CondNet {
    net: RecurrentConv,
}

impl CondNet {
    pub fn register<T: Real, R: Rng>(store: &mut ParamStore<T>, config: CondConfig, rng: &mut R) -> Self {
        let net = RecurrentConv::register(store, "cond", config.n_mels, config.lstm_units, config.conv_channels, rng);
        Self { net }
    }

    /// Frame-rate features `[F, conv_channels + 1]`, raw F0 in the last
    /// column.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, mel: Var, f0: Var) -> Result<Var, GraphError> {
        g.set_scope("cond");
        let h = self.net.forward(g, store, mel)?;
        g.concat_cols(h, f0)
    }
}

/// How conditioning reaches a layer: frame-rate rows repeated `hop` times
/// after projection, or features already at sample rate.
#[derive(Debug, Clone, Copy)]
pub(crate) enum CondInput {
    Frames { feats: Var, hop: usize },
    Samples(Var),
}

impl CondInput {
    /// Projects the features through `w` and returns them at sample rate.
    pub fn project<T: Real>(self, g: &mut Graph<T>, w: Var) -> Result<Var, GraphError> {
        match self {
            CondInput::Frames { feats, hop } => {
                let c = g.dense(feats, w, None)?;
                g.repeat_rows(c, hop)
            }
            CondInput::Samples(feats) => g.dense(feats, w, None),
        }
    }
}

/// Row vector that rescales the F0 channel of conditioning features.
pub(crate) fn feature_scale<T: Real>(g: &mut Graph<T>, dim: usize) -> Var {
    let mut row = vec![T::one(); dim];
    row[dim - 1] = T::from_f(F0_FEATURE_SCALE);
    g.input(Tensor::from_vec(1, dim, row))
}

/// Shape of a named checkpoint tensor.
pub(crate) fn tensor_shape<'a>(ckpt: &'a ModelCheckpoint, name: &str) -> Result<&'a [usize], CheckpointError> {
    ckpt.tensor(name)
        .map(|t| t.shape.as_slice())
        .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))
}

/// Infers the conditioning configuration from checkpoint tensor shapes.
pub(crate) fn infer_cond_config(ckpt: &ModelCheckpoint) -> Result<CondConfig, CheckpointError> {
    let wih = tensor_shape(ckpt, "cond.lstm_fw.wih")?;
    let conv = tensor_shape(ckpt, "cond.conv.w")?;
    let bad = || CheckpointError::Malformed("conditioning tensors have unexpected rank".into());
    if wih.len() != 2 || conv.len() != 3 {
        return Err(bad());
    }
    Ok(CondConfig {
        n_mels: wih[0],
        lstm_units: wih[1] / 4,
        conv_channels: conv[2],
    })
}
