use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use log::warn;

use super::{CorpusError, Waveform};

/// Reads a PCM (16/24-bit) or IEEE float (32-bit) WAV file.
///
/// Integer samples are divided by the format's full-scale value, so a
/// 16-bit `-32768` maps to exactly `-1.0`. Multi-channel files keep
/// channel 0.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, CorpusError> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 {
        return Err(CorpusError::MalformedWav {
            path: path.into(),
            message: "zero channels".into(),
        });
    }
    if spec.channels > 1 {
        warn!("{}: {} channels, keeping channel 0", path.display(), spec.channels);
    }
    let channels = spec.channels as usize;

    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) | (SampleFormat::Int, 24) => {
            let full_scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            let mut out = Vec::with_capacity(reader.len() as usize / channels);
            for (i, s) in reader.samples::<i32>().enumerate() {
                let s = s.map_err(|e| map_hound(path, e))?;
                if i % channels == 0 {
                    out.push((s as f64 / full_scale) as f32);
                }
            }
            out
        }
        (SampleFormat::Float, 32) => {
            let mut out = Vec::with_capacity(reader.len() as usize / channels);
            for (i, s) in reader.samples::<f32>().enumerate() {
                let s = s.map_err(|e| map_hound(path, e))?;
                if i % channels == 0 {
                    out.push(s);
                }
            }
            out
        }
        (fmt, bits) => {
            return Err(CorpusError::UnsupportedEncoding {
                path: path.into(),
                message: format!("{fmt:?} with {bits} bits per sample"),
            })
        }
    };

    if samples.is_empty() {
        return Err(CorpusError::EmptyAudio(path.into()));
    }
    Waveform::new(samples, spec.sample_rate).map_err(|e| CorpusError::MalformedWav {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Writes a mono PCM WAV at 16 or 24 bits. Samples are clipped to
/// `[-1, 1]` and rounded to the nearest step of `1 / 2^(bits-1)`.
pub fn write_wav(waveform: &Waveform, path: impl AsRef<Path>, bit_depth: u16) -> Result<(), CorpusError> {
    let path = path.as_ref();
    if bit_depth != 16 && bit_depth != 24 {
        return Err(CorpusError::UnsupportedBitDepth(bit_depth));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: waveform.sample_rate,
        bits_per_sample: bit_depth,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    let full_scale = (1i64 << (bit_depth - 1)) as f64;
    let max_code = full_scale - 1.0;
    for &s in &waveform.samples {
        let x = (s as f64).clamp(-1.0, 1.0);
        let code = (x * full_scale).round().clamp(-full_scale, max_code) as i32;
        writer.write_sample(code).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

/// Duration of a WAV file from its header, without decoding samples.
pub(crate) fn wav_duration_s(path: &Path) -> Result<f64, CorpusError> {
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.sample_rate == 0 {
        return Err(CorpusError::MalformedWav {
            path: path.into(),
            message: "zero sample rate".into(),
        });
    }
    Ok(reader.duration() as f64 / spec.sample_rate as f64)
}

fn map_hound(path: &Path, err: hound::Error) -> CorpusError {
    match err {
        hound::Error::IoError(e) => CorpusError::io(path, e),
        hound::Error::Unsupported => CorpusError::UnsupportedEncoding {
            path: path.into(),
            message: "unsupported WAV feature".into(),
        },
        other => CorpusError::MalformedWav {
            path: path.into(),
            message: other.to_string(),
        },
    }
}
