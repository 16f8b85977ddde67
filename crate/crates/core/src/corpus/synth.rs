//! Seeded stand-in corpus: harmonic tones following random note plans,
//! with matching 10 ms F0 labels and a piece-disjoint manifest.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    write_f0_labels, write_wav, CorpusError, CorpusManifest, CorpusRecord, F0Track, Split, Waveform,
    LABEL_FRAME_SHIFT_S,
};

const N_HARMONICS: usize = 6;
const PEAK_AMPLITUDE: f64 = 0.6;
const NOISE_STD: f64 = 0.002;
const RAMP_S: f64 = 0.010;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoInstrument {
    pub name: String,
    pub f0_min_hz: f32,
    pub f0_max_hz: f32,
}

impl PseudoInstrument {
    pub fn new(name: &str, f0_min_hz: f32, f0_max_hz: f32) -> Self {
        Self {
            name: name.into(),
            f0_min_hz,
            f0_max_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpusSpec {
    pub n_tracks: usize,
    pub seconds: f64,
    pub sample_rate: u32,
    pub instruments: Vec<PseudoInstrument>,
}

impl Default for SynthCorpusSpec {
    fn default() -> Self {
        Self {
            n_tracks: 6,
            seconds: 4.0,
            sample_rate: 48_000,
            instruments: vec![
                PseudoInstrument::new("violin", 196.0, 1400.0),
                PseudoInstrument::new("cello", 65.0, 700.0),
                PseudoInstrument::new("flute", 262.0, 1900.0),
            ],
        }
    }
}

impl SynthCorpusSpec {
    fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSpec(m));
        if self.n_tracks == 0 || self.instruments.is_empty() {
            return bad("need at least one track and one instrument".into());
        }
        if !(self.seconds > 0.0) || self.sample_rate == 0 {
            return bad("duration and sample rate must be positive".into());
        }
        let nyquist = self.sample_rate as f32 / 2.0;
        for inst in &self.instruments {
            if !(20.0 <= inst.f0_min_hz && inst.f0_min_hz <= inst.f0_max_hz && inst.f0_max_hz < nyquist) {
                return bad(format!("instrument {} has an invalid F0 range", inst.name));
            }
        }
        Ok(())
    }

    fn n_pieces(&self) -> usize {
        self.n_tracks.div_ceil(self.instruments.len())
    }

    /// Tracks are grouped into pieces one instrument each, like small
    /// ensembles. The last piece is test, the one before it dev.
    fn split_of_piece(&self, piece: usize) -> Split {
        let n = self.n_pieces();
        match n {
            1 => Split::Train,
            2 if piece == 1 => Split::Test,
            _ if piece + 1 == n => Split::Test,
            _ if n >= 3 && piece + 2 == n => Split::Dev,
            _ => Split::Train,
        }
    }
}

/// One segment of a note plan, in samples. `f0_hz == 0` is a rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedNote {
    pub start: usize,
    pub end: usize,
    pub f0_hz: f32,
}

/// The note plan of track `index`, a pure function of the spec and seed.
pub fn note_plan(spec: &SynthCorpusSpec, index: usize, seed: u64) -> Vec<PlannedNote> {
    let inst = &spec.instruments[index % spec.instruments.len()];
    let mut rng = track_rng(seed, index, 0);
    let sr = spec.sample_rate as f64;
    let total = (spec.seconds * sr).round() as usize;
    let (lo, hi) = ((inst.f0_min_hz as f64).ln(), (inst.f0_max_hz as f64).ln());
    let mut notes = Vec::new();
    let mut t = 0usize;
    while t < total {
        let rest = rng.random_bool(0.25);
        let (dur_s, f0) = if rest {
            (rng.random_range(0.05..0.2), 0.0)
        } else {
            let f0 = if hi > lo { rng.random_range(lo..hi).exp() } else { lo.exp() };
            (rng.random_range(0.25..0.6), f0)
        };
        let end = (t + (dur_s * sr).round() as usize).min(total);
        notes.push(PlannedNote {
            start: t,
            end,
            f0_hz: f0 as f32,
        });
        t = end;
    }
    notes
}

/// 10 ms labels for a plan: label `i` is the F0 at the centre of its span.
pub fn labels_from_plan(plan: &[PlannedNote], sample_rate: u32, seconds: f64) -> F0Track {
    let n = (seconds / LABEL_FRAME_SHIFT_S).round() as usize;
    let values = (0..n)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * LABEL_FRAME_SHIFT_S * sample_rate as f64) as usize;
            plan.iter()
                .find(|note| note.start <= pos && pos < note.end)
                .map_or(0.0, |note| note.f0_hz)
        })
        .collect();
    F0Track {
        values,
        frame_shift_s: LABEL_FRAME_SHIFT_S,
    }
}

/// Renders a plan: six harmonics with `1/k` amplitudes, 10 ms ramps,
/// plus low-level Gaussian noise.
pub fn render_plan(plan: &[PlannedNote], sample_rate: u32, noise_seed: u64) -> Vec<f32> {
    let sr = sample_rate as f64;
    let total = plan.last().map_or(0, |n| n.end);
    let mut out = vec![0.0f64; total];
    let norm: f64 = (1..=N_HARMONICS).map(|k| 1.0 / k as f64).sum();
    let ramp = ((RAMP_S * sr) as usize).max(1);
    for note in plan.iter().filter(|n| n.f0_hz > 0.0) {
        let len = note.end - note.start;
        let f0 = note.f0_hz as f64;
        for (i, slot) in out[note.start..note.end].iter_mut().enumerate() {
            let env = (i.min(len - 1 - i) as f64 / ramp as f64).min(1.0);
            let phase = 2.0 * PI * f0 * i as f64 / sr;
            let mut v = 0.0;
            for k in 1..=N_HARMONICS {
                if k as f64 * f0 >= sr / 2.0 {
                    break;
                }
                v += (k as f64 * phase).sin() / k as f64;
            }
            *slot = PEAK_AMPLITUDE * env * v / norm;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let normal = Normal::new(0.0, NOISE_STD).expect("valid std");
    out.iter()
        .map(|&v| (v + normal.sample(&mut rng)).clamp(-1.0, 1.0) as f32)
        .collect()
}

fn track_rng(seed: u64, index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((index as u64) << 1) | stream);
    rng
}

/// Writes `audio/*.wav`, `f0/*.f0` and `manifest.tsv` under `out_dir`.
pub fn make_synth_corpus(
    spec: &SynthCorpusSpec,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<CorpusManifest, CorpusError> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    for sub in ["audio", "f0"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| CorpusError::io(d, e))?;
    }
    let mut records = Vec::with_capacity(spec.n_tracks);
    for index in 0..spec.n_tracks {
        let inst = &spec.instruments[index % spec.instruments.len()];
        let piece = index / spec.instruments.len();
        let name = format!("{}_{:03}", inst.name, index);

        let plan = note_plan(spec, index, seed);
        let noise_seed = track_rng(seed, index, 1).random::<u64>();
        let audio = Waveform {
            samples: render_plan(&plan, spec.sample_rate, noise_seed),
            sample_rate: spec.sample_rate,
        };
        let labels = labels_from_plan(&plan, spec.sample_rate, spec.seconds);

        let audio_rel = Path::new("audio").join(format!("{name}.wav"));
        let f0_rel = Path::new("f0").join(format!("{name}.f0"));
        write_wav(&audio, out_dir.join(&audio_rel), 16)?;
        write_f0_labels(&labels, out_dir.join(&f0_rel))?;
        records.push(CorpusRecord {
            audio_path: audio_rel,
            f0_path: f0_rel,
            instrument: inst.name.clone(),
            piece_id: format!("piece{piece:02}"),
            split: spec.split_of_piece(piece),
        });
    }
    let manifest = CorpusManifest::new(out_dir, records)?;
    manifest.save(out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}
