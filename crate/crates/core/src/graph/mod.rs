//! Reverse-mode differentiation over a fixed set of layer primitives,
//! Adam, finite-difference gradient checking and checkpoint files.

mod adam;
mod checkpoint;
mod gradcheck;
mod lstm;
mod params;
mod real;
mod sinc;
mod spectral;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, ArchId, CheckpointError, ModelCheckpoint, NamedTensor};
pub use gradcheck::{
    analytic_gradients, compare_gradients, grad_check, numeric_gradients, BlockReport, GradCheckReport, BLOCK_SCALE_FLOOR,
};
pub use params::{ParamId, ParamStore, ParamTensor};
pub use real::Real;
pub use sinc::{hamming, sinc_lowpass};
pub use spectral::{multires_stft_loss, StftResolution, DEFAULT_RESOLUTIONS, LOG_POWER_FLOOR};
pub use tape::{ConvMode, ConvSpec, Graph, LstmVars, Var};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("shape mismatch at node {node} ({op}) in {scope}: {message}")]
    Shape {
        node: usize,
        op: &'static str,
        scope: String,
        message: String,
    },
    #[error("backward before forward: loss node {0} was never computed in this graph")]
    NotForwarded(usize),
    #[error("loss node {node} is {rows}x{cols}, backward needs a scalar")]
    NonScalarLoss { node: usize, rows: usize, cols: usize },
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
}
