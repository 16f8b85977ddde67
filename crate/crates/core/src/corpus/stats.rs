use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::wav::wav_duration_s;
use super::{check_label_length, parse_f0_labels, CorpusError, CorpusManifest, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub instrument: String,
    pub split: Split,
    pub track_count: usize,
    pub duration_min: f64,
    /// Extrema over voiced frames; `None` when no frame is voiced.
    pub f0_max_hz: Option<f32>,
    pub f0_min_hz: Option<f32>,
}

/// Per-instrument, per-split table. Pairs without tracks have no row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusStats {
    pub rows: Vec<StatsRow>,
}

impl CorpusStats {
    pub fn row(&self, instrument: &str, split: Split) -> Option<&StatsRow> {
        self.rows
            .iter()
            .find(|r| r.instrument == instrument && r.split == split)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("instrument,split,count,duration_min,f0_max,f0_min\n");
        let fmt_opt = |v: Option<f32>| v.map_or_else(|| "NA".to_string(), |x| format!("{x}"));
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.4},{},{}",
                r.instrument,
                r.split,
                r.track_count,
                r.duration_min,
                fmt_opt(r.f0_max_hz),
                fmt_opt(r.f0_min_hz)
            )
            .expect("string write");
        }
        out
    }
}

pub fn corpus_stats(manifest: &CorpusManifest) -> Result<CorpusStats, CorpusError> {
    let mut acc: BTreeMap<(String, Split), StatsRow> = BTreeMap::new();
    for (i, rec) in manifest.records.iter().enumerate() {
        let with_ctx = |e| manifest.record_error(i, e);
        let duration_s = wav_duration_s(&manifest.audio_path(rec)).map_err(with_ctx)?;
        let labels = parse_f0_labels(manifest.f0_path(rec)).map_err(with_ctx)?;
        check_label_length(&labels, duration_s).map_err(with_ctx)?;

        let row = acc
            .entry((rec.instrument.clone(), rec.split))
            .or_insert_with(|| StatsRow {
                instrument: rec.instrument.clone(),
                split: rec.split,
                track_count: 0,
                duration_min: 0.0,
                f0_max_hz: None,
                f0_min_hz: None,
            });
        row.track_count += 1;
        row.duration_min += duration_s / 60.0;
        for v in labels.voiced() {
            row.f0_max_hz = Some(row.f0_max_hz.map_or(v, |m| m.max(v)));
            row.f0_min_hz = Some(row.f0_min_hz.map_or(v, |m| m.min(v)));
        }
    }
    Ok(CorpusStats {
        rows: acc.into_values().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{write_f0_labels, write_wav, CorpusRecord, F0Track, Waveform};
    use std::path::Path;

    fn add_track(dir: &Path, name: &str, seconds: usize, f0: Vec<f32>) {
        let sr = 8000;
        let w = Waveform::new(vec![0.0; seconds * sr as usize], sr).unwrap();
        write_wav(&w, dir.join(format!("{name}.wav")), 16).unwrap();
        write_f0_labels(&F0Track::new(f0, 0.01).unwrap(), dir.join(format!("{name}.f0"))).unwrap();
    }

    fn rec(name: &str, instrument: &str, piece: &str, split: Split) -> CorpusRecord {
        CorpusRecord {
            audio_path: format!("{name}.wav").into(),
            f0_path: format!("{name}.f0").into(),
            instrument: instrument.into(),
            piece_id: piece.into(),
            split,
        }
    }

    #[test]
    fn one_minute_constant_violin() {
        let dir = tempfile::tempdir().unwrap();
        add_track(dir.path(), "v", 60, vec![300.0; 6000]);
        let m = CorpusManifest::new(dir.path(), vec![rec("v", "violin", "p0", Split::Train)]).unwrap();
        let s = corpus_stats(&m).unwrap();
        let row = s.row("violin", Split::Train).unwrap();
        assert_eq!(row.track_count, 1);
        assert!((row.duration_min - 1.0).abs() < 1e-12);
        assert_eq!(row.f0_max_hz, Some(300.0));
        assert_eq!(row.f0_min_hz, Some(300.0));
        assert!(s.row("violin", Split::Test).is_none());
    }

    #[test]
    fn unvoiced_frames_are_ignored_and_all_unvoiced_is_absent() {
        let dir = tempfile::tempdir().unwrap();
        let mut f0 = vec![0.0; 100];
        f0[10] = 150.0;
        f0[20] = 90.0;
        add_track(dir.path(), "a", 1, f0);
        add_track(dir.path(), "b", 1, vec![0.0; 100]);
        let m = CorpusManifest::new(
            dir.path(),
            vec![rec("a", "cello", "p0", Split::Train), rec("b", "bass", "p1", Split::Dev)],
        )
        .unwrap();
        let s = corpus_stats(&m).unwrap();
        let cello = s.row("cello", Split::Train).unwrap();
        assert_eq!((cello.f0_min_hz, cello.f0_max_hz), (Some(90.0), Some(150.0)));
        let bass = s.row("bass", Split::Dev).unwrap();
        assert_eq!((bass.f0_min_hz, bass.f0_max_hz), (None, None));
        let csv = s.to_csv();
        assert!(csv.starts_with("instrument,split,count,duration_min,f0_max,f0_min\n"));
        assert!(csv.contains("bass,dev,1,0.0167,NA,NA"));
    }

    #[test]
    fn missing_file_carries_record_context() {
        let dir = tempfile::tempdir().unwrap();
        let m = CorpusManifest::new(dir.path(), vec![rec("gone", "horn", "p9", Split::Test)]).unwrap();
        let err = corpus_stats(&m).unwrap_err();
        assert!(err.to_string().contains("horn/p9"), "{err}");
    }
}
