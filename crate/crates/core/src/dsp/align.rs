use crate::corpus::F0Track;

use super::FeatureProfile;

/// Maps reference labels onto the profile's frame grid.
///
/// Profile frame `j` is centred at `j * hop / sample_rate` seconds and
/// takes the label whose span contains that instant (nearest label
/// centre). Values are copied, never interpolated, so voicing
/// boundaries stay sharp. Frames past the end reuse the last label; an
/// empty track yields unvoiced frames.
pub fn align_f0_to_frames(track: &F0Track, n_frames: usize, profile: &FeatureProfile) -> Vec<f32> {
    if track.is_empty() {
        return vec![0.0; n_frames];
    }
    let last = track.len() - 1;
    let frames_per_second = profile.sample_rate as f64 * track.frame_shift_s;
    (0..n_frames)
        .map(|j| {
            let idx = ((j * profile.hop) as f64 / frames_per_second + 1e-9).floor() as usize;
            track.values[idx.min(last)]
        })
        .collect()
}

/// Repeats each frame value `hop` times.
pub fn upsample_f0_replicate(frame_f0: &[f32], hop: usize) -> Vec<f32> {
    frame_f0
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, hop))
        .collect()
}
