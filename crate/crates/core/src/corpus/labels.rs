use std::fmt::Write as _;
use std::path::Path;

use super::CorpusError;

/// Shift of the reference F0 label grid.
pub const LABEL_FRAME_SHIFT_S: f64 = 0.010;

const F0_MIN_HZ: f32 = 20.0;
const F0_MAX_HZ: f32 = 20_000.0;

/// Per-frame fundamental frequency, `0.0` meaning unvoiced.
///
/// Label `i` describes the span `[i * shift, (i + 1) * shift)`.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub values: Vec<f32>,
    pub frame_shift_s: f64,
}

impl F0Track {
    pub fn new(values: Vec<f32>, frame_shift_s: f64) -> Result<Self, String> {
        if !(frame_shift_s > 0.0) {
            return Err(format!("frame shift must be positive, got {frame_shift_s}"));
        }
        for (i, &v) in values.iter().enumerate() {
            validate_f0(v).map_err(|m| format!("frame {i}: {m}"))?;
        }
        Ok(Self { values, frame_shift_s })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 * self.frame_shift_s
    }

    pub fn voiced(&self) -> impl Iterator<Item = f32> + '_ {
        self.values.iter().copied().filter(|&v| v > 0.0)
    }
}

fn validate_f0(v: f32) -> Result<(), String> {
    if !v.is_finite() {
        return Err("non-finite F0".into());
    }
    if v < 0.0 {
        return Err(format!("negative F0 {v}"));
    }
    if v != 0.0 && !(F0_MIN_HZ..=F0_MAX_HZ).contains(&v) {
        return Err(format!("F0 {v} outside [{F0_MIN_HZ}, {F0_MAX_HZ}] Hz"));
    }
    Ok(())
}

/// Parses a label file holding one Hz value per line on the 10 ms grid.
pub fn parse_f0_labels(path: impl AsRef<Path>) -> Result<F0Track, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let err = |message: String| CorpusError::LabelParse {
            path: path.into(),
            line: idx + 1,
            message,
        };
        let v: f32 = trimmed
            .parse()
            .map_err(|_| err(format!("not a number: {trimmed:?}")))?;
        validate_f0(v).map_err(err)?;
        values.push(v);
    }
    Ok(F0Track {
        values,
        frame_shift_s: LABEL_FRAME_SHIFT_S,
    })
}

pub fn write_f0_labels(track: &F0Track, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = String::with_capacity(track.values.len() * 8);
    for v in &track.values {
        writeln!(out, "{v}").expect("string write");
    }
    std::fs::write(path, out).map_err(|e| CorpusError::io(path, e))
}

/// Accepts a label track whose implied duration is within two label
/// frames of the audio duration.
pub fn check_label_length(track: &F0Track, audio_duration_s: f64) -> Result<(), CorpusError> {
    let labels_s = track.duration_s();
    if (labels_s - audio_duration_s).abs() > 2.0 * track.frame_shift_s + 1e-9 {
        return Err(CorpusError::LabelLengthMismatch {
            labels_s,
            audio_s: audio_duration_s,
        });
    }
    Ok(())
}
