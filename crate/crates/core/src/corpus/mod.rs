//! Audio corpus handling: WAV and F0 label I/O, dataset manifests,
//! per-instrument statistics, evaluation segmentation and a seeded
//! synthetic corpus generator.

mod labels;
mod manifest;
mod segment;
mod stats;
mod synth;
mod wav;

use std::path::PathBuf;

use thiserror::Error;

pub use labels::{check_label_length, parse_f0_labels, write_f0_labels, F0Track, LABEL_FRAME_SHIFT_S};
pub use manifest::{CorpusManifest, CorpusRecord, Split};
pub use segment::segment_track;
pub use stats::{corpus_stats, CorpusStats, StatsRow};
pub use synth::{labels_from_plan, make_synth_corpus, note_plan, render_plan, PlannedNote, PseudoInstrument, SynthCorpusSpec};
pub use wav::{read_wav, write_wav};

/// Mono audio with its sample rate. Samples are nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, CorpusError> {
        if sample_rate == 0 {
            return Err(CorpusError::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(CorpusError::InvalidWaveform(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV {path}: {message}")]
    MalformedWav { path: PathBuf, message: String },
    #[error("unsupported WAV encoding in {path}: {message}")]
    UnsupportedEncoding { path: PathBuf, message: String },
    #[error("WAV {0} contains no audio")]
    EmptyAudio(PathBuf),
    #[error("unsupported bit depth {0} (expected 16 or 24)")]
    UnsupportedBitDepth(u16),
    #[error("{path}:{line}: {message}")]
    LabelParse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("manifest {path}:{line}: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("piece {0} appears in both train and test splits")]
    SplitOverlap(String),
    #[error("record {record} ({instrument}/{piece}): {source}")]
    Record {
        record: usize,
        instrument: String,
        piece: String,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("F0 labels {labels_s:.3}s vs audio {audio_s:.3}s differ by more than 2 frames")]
    LabelLengthMismatch { labels_s: f64, audio_s: f64 },
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}
