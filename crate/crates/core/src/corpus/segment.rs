use super::{CorpusError, Waveform};

/// Cuts a track into consecutive pieces of at most `max_seconds`.
///
/// Cuts fall at fixed sample boundaries; every piece except the last is
/// exactly `round(max_seconds * sample_rate)` samples long.
pub fn segment_track(waveform: &Waveform, max_seconds: f64) -> Result<Vec<Waveform>, CorpusError> {
    let max_samples = (max_seconds * waveform.sample_rate as f64).round();
    if !(max_seconds > 0.0) || max_samples < 1.0 {
        return Err(CorpusError::InvalidSpec(format!(
            "segment length {max_seconds}s is shorter than one sample"
        )));
    }
    Ok(waveform
        .samples
        .chunks(max_samples as usize)
        .map(|c| Waveform {
            samples: c.to_vec(),
            sample_rate: waveform.sample_rate,
        })
        .collect())
}
