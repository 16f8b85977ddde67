//! Feature extraction: resampling, STFT, mel-spectrograms, μ-law
//! companding, F0 grid alignment and rainbow-grams.

mod align;
mod mel;
mod melfile;
mod mulaw;
mod profile;
mod rainbow;
mod resample;
mod stft;

use std::path::PathBuf;

use thiserror::Error;

pub use align::{align_f0_to_frames, upsample_f0_replicate};
pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelSpectrogram, LOG_FLOOR};
pub use melfile::{read_mel, write_mel};
pub use mulaw::{mu_law_compand, mu_law_decode, mu_law_encode, MuLawCodec, MU, QUANT_LEVELS};
pub use profile::{FeatureProfile, ProfileName};
pub use rainbow::{rainbowgram, Rainbowgram};
pub use resample::{resample, resample_ratio};
pub use stft::{hann_window, stft, stft_frame_count, stft_with, Padding, Spectrogram};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("resampling only goes down: {from} Hz -> {to} Hz requested")]
    Upsampling { from: u32, to: u32 },
    #[error("waveform is {found} Hz but profile {profile} expects {expected} Hz; resample first")]
    RateMismatch {
        profile: String,
        expected: u32,
        found: u32,
    },
    #[error("degenerate mel filterbank: {0}")]
    DegenerateFilterbank(String),
    #[error("mu-law code {0} out of range [0, 1023]")]
    CodeOutOfRange(u32),
    #[error("unknown feature profile {0:?}")]
    UnknownProfile(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad mel file {path}: {message}")]
    BadMelFile { path: PathBuf, message: String },
}
