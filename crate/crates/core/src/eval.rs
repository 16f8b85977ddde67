//! Objective pitch evaluation: a normalized-autocorrelation F0 extractor,
//! Pearson correlation and voiced/unvoiced error against reference labels,
//! and per-instrument report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{parse_f0_labels, read_wav, CorpusError, CorpusRecord, F0Track, Waveform, LABEL_FRAME_SHIFT_S};

pub const DEFAULT_VOICING_THRESHOLD: f64 = 0.3;
const WINDOW_S: f64 = 0.025;
const F0_MIN_HZ: f64 = 40.0;
const F0_MAX_HZ: f64 = 2000.0;
/// Lags whose correlation is within this fraction of the best peak are
/// preferred when shorter, which suppresses octave-down errors.
const OCTAVE_TOLERANCE: f64 = 0.95;

/// Label used for the frame-weighted row covering every instrument.
pub const OVERALL: &str = "ALL";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("sample rate {0} Hz is below 8000 Hz")]
    SampleRate(u32),
    #[error("cannot compute V/UV error over zero frames")]
    Empty,
    #[error("{} synthesized file(s) missing, first: {}", .0.len(), .0[0].display())]
    MissingFiles(Vec<PathBuf>),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Frame-level F0 on a 10 ms grid. `f0_hz == 0` marks unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Estimate {
    pub f0_hz: Vec<f32>,
    pub voicing_confidence: Vec<f32>,
    pub frame_shift_s: f64,
}

impl F0Estimate {
    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }
}

pub fn extract_f0(waveform: &Waveform) -> Result<F0Estimate, EvalError> {
    extract_f0_with(waveform, DEFAULT_VOICING_THRESHOLD)
}

/// Frame `i` is centred at `(i + 0.5) * 10 ms`, matching the label grid.
pub fn extract_f0_with(waveform: &Waveform, threshold: f64) -> Result<F0Estimate, EvalError> {
    let sr = waveform.sample_rate as f64;
    if waveform.sample_rate < 8000 {
        return Err(EvalError::SampleRate(waveform.sample_rate));
    }
    let x = &waveform.samples;
    let hop = LABEL_FRAME_SHIFT_S * sr;
    let n_frames = (x.len() as f64 / hop).floor() as usize;
    let win = (WINDOW_S * sr).round() as usize;
    let min_lag = (sr / F0_MAX_HZ).floor().max(1.0) as usize;
    let max_lag = (sr / F0_MIN_HZ).ceil() as usize;
    let at = |i: isize| if i >= 0 && (i as usize) < x.len() { x[i as usize] as f64 } else { 0.0 };

    let mut f0_hz = Vec::with_capacity(n_frames);
    let mut confidence = Vec::with_capacity(n_frames);
    let mut seg = vec![0.0; win + max_lag + 1];
    let mut corr = vec![0.0; max_lag + 2];
    for i in 0..n_frames {
        let start = ((i as f64 + 0.5) * hop).round() as isize - (win / 2) as isize;
        for (j, s) in seg.iter_mut().enumerate() {
            *s = at(start + j as isize);
        }
        let e0: f64 = seg[..win].iter().map(|v| v * v).sum();
        // Running energy of the lagged window.
        let mut el: f64 = seg[min_lag - 1..min_lag - 1 + win].iter().map(|v| v * v).sum();
        for lag in min_lag - 1..=max_lag + 1 {
            if lag > min_lag - 1 {
                el += seg[lag + win - 1].powi(2) - seg[lag - 1].powi(2);
            }
            let dot: f64 = seg[..win].iter().zip(&seg[lag..lag + win]).map(|(a, b)| a * b).sum();
            let denom = (e0 * el.max(0.0)).sqrt();
            corr[lag] = if denom > 1e-12 { dot / denom } else { 0.0 };
        }
        // Only interior maxima count: at the shortest lags a low tone is
        // still on the slope down from lag zero.
        let is_peak = |l: usize| corr[l] > corr[l - 1] && corr[l] >= corr[l + 1];
        let best = (min_lag..=max_lag).filter(|&l| is_peak(l)).max_by(|&a, &b| corr[a].total_cmp(&corr[b]));
        let Some(best) = best else {
            f0_hz.push(0.0);
            confidence.push(0.0);
            continue;
        };
        let peak = corr[best];
        let chosen = (min_lag..=best)
            .find(|&l| is_peak(l) && corr[l] >= OCTAVE_TOLERANCE * peak)
            .unwrap_or(best);
        let r = corr[chosen];
        if r >= threshold && peak > 0.0 {
            let (a, b, c) = (corr[chosen - 1], r, corr[chosen + 1]);
            let curve = a - 2.0 * b + c;
            let shift = if curve < 0.0 { (0.5 * (a - c) / curve).clamp(-0.5, 0.5) } else { 0.0 };
            f0_hz.push((sr / (chosen as f64 + shift)) as f32);
        } else {
            f0_hz.push(0.0);
        }
        confidence.push(r.clamp(0.0, 1.0) as f32);
    }
    Ok(F0Estimate {
        f0_hz,
        voicing_confidence: confidence,
        frame_shift_s: LABEL_FRAME_SHIFT_S,
    })
}

/// Pearson correlation over frames voiced in both tracks, after
/// truncating to the shorter one. `None` when fewer than two such frames
/// exist or either side has zero variance.
pub fn pcc(reference: &F0Track, estimate: &F0Estimate) -> Option<f64> {
    pcc_values(&reference.values, &estimate.f0_hz)
}

pub fn pcc_values(reference: &[f32], estimate: &[f32]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = reference
        .iter()
        .zip(estimate)
        .filter(|(r, e)| **r > 0.0 && **e > 0.0)
        .map(|(&r, &e)| (r as f64, e as f64))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let (mr, me) = pairs.iter().fold((0.0, 0.0), |(a, b), (r, e)| (a + r, b + e));
    let (mr, me) = (mr / n, me / n);
    let (mut cov, mut vr, mut ve) = (0.0, 0.0, 0.0);
    for (r, e) in &pairs {
        cov += (r - mr) * (e - me);
        vr += (r - mr) * (r - mr);
        ve += (e - me) * (e - me);
    }
    if vr <= 0.0 || ve <= 0.0 {
        return None;
    }
    Some((cov / (vr * ve).sqrt()).clamp(-1.0, 1.0))
}

/// Percentage of frames whose voicing decisions disagree.
pub fn vuv_error(reference: &F0Track, estimate: &F0Estimate) -> Result<f64, EvalError> {
    vuv_error_values(&reference.values, &estimate.f0_hz)
}

pub fn vuv_error_values(reference: &[f32], estimate: &[f32]) -> Result<f64, EvalError> {
    let n = reference.len().min(estimate.len());
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let wrong = reference.iter().zip(estimate).filter(|(r, e)| (**r > 0.0) != (**e > 0.0)).count();
    Ok(100.0 * wrong as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub system: String,
    pub instrument: String,
    pub pcc: Option<f64>,
    pub vuv_pct: f64,
    pub n_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemReport {
    /// One row per instrument in name order, then the overall row.
    pub rows: Vec<ReportRow>,
    /// Synthesized files the manifest asked for but that do not exist.
    pub missing: Vec<PathBuf>,
}

impl SystemReport {
    pub fn overall(&self) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.instrument == OVERALL)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("system,instrument,pcc,vuv_pct,n_frames\n");
        for r in &self.rows {
            let pcc = r.pcc.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
            writeln!(out, "{},{},{},{:.4},{}", r.system, r.instrument, pcc, r.vuv_pct, r.n_frames).expect("string write");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Aligned reference and estimate frames pooled per instrument.
#[derive(Default)]
struct Pool {
    reference: Vec<f32>,
    estimate: Vec<f32>,
}

impl Pool {
    fn push(&mut self, reference: &[f32], estimate: &[f32]) {
        let n = reference.len().min(estimate.len());
        self.reference.extend_from_slice(&reference[..n]);
        self.estimate.extend_from_slice(&estimate[..n]);
    }

    fn row(&self, system: &str, instrument: &str) -> ReportRow {
        ReportRow {
            system: system.to_string(),
            instrument: instrument.to_string(),
            pcc: pcc_values(&self.reference, &self.estimate),
            vuv_pct: vuv_error_values(&self.reference, &self.estimate).unwrap_or(0.0),
            n_frames: self.reference.len(),
        }
    }
}

/// The synthesized file expected for a record.
pub fn synthesized_path(record: &CorpusRecord, synth_dir: &Path) -> PathBuf {
    synth_dir.join(format!("{}.wav", record.stem()))
}

/// Scores synthesized audio in `synth_dir` against the reference labels
/// of `records` (paths resolved under `base_dir`). Missing files are
/// listed in the report and skipped.
pub fn evaluate_system(
    system: &str,
    records: &[CorpusRecord],
    base_dir: &Path,
    synth_dir: &Path,
    threshold: f64,
) -> Result<SystemReport, EvalError> {
    let mut pools: BTreeMap<&str, Pool> = BTreeMap::new();
    let mut overall = Pool::default();
    let mut missing = Vec::new();
    for record in records {
        let path = synthesized_path(record, synth_dir);
        if !path.is_file() {
            missing.push(path);
            continue;
        }
        let wave = read_wav(&path)?;
        let reference = parse_f0_labels(base_dir.join(&record.f0_path))?;
        let estimate = extract_f0_with(&wave, threshold)?;
        pools.entry(&record.instrument).or_default().push(&reference.values, &estimate.f0_hz);
        overall.push(&reference.values, &estimate.f0_hz);
    }
    let mut rows: Vec<ReportRow> = pools.iter().map(|(inst, pool)| pool.row(system, inst)).collect();
    if !rows.is_empty() {
        rows.push(overall.row(system, OVERALL));
    }
    Ok(SystemReport { rows, missing })
}
