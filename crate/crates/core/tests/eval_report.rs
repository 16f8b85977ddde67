use std::fs;

use nws_core::corpus::{make_synth_corpus, SynthCorpusSpec};
use nws_core::eval::{evaluate_system, DEFAULT_VOICING_THRESHOLD, OVERALL};

#[test]
fn natural_copies_score_near_perfect() {
    for seed in [0, 3] {
        let dir = tempfile::tempdir().unwrap();
        let manifest = make_synth_corpus(&SynthCorpusSpec::default(), dir.path().join("corpus"), seed).unwrap();
        let copies = dir.path().join("copies");
        fs::create_dir_all(&copies).unwrap();
        for r in &manifest.records {
            fs::copy(manifest.audio_path(r), copies.join(format!("{}.wav", r.stem()))).unwrap();
        }
        let report = evaluate_system("NAT", &manifest.records, &manifest.base_dir, &copies, DEFAULT_VOICING_THRESHOLD).unwrap();
        assert!(report.missing.is_empty());
        let all = report.overall().unwrap();
        let pcc = all.pcc.unwrap();
        assert!(pcc >= 0.95, "seed {seed}: PCC {pcc}");
        assert!(all.vuv_pct <= 5.0, "seed {seed}: V/UV {}", all.vuv_pct);
        for row in &report.rows {
            assert!(row.vuv_pct <= 10.0, "seed {seed} {}: V/UV {}", row.instrument, row.vuv_pct);
        }
    }
}

#[test]
fn missing_files_are_listed_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthCorpusSpec {
        n_tracks: 3,
        seconds: 1.0,
        ..SynthCorpusSpec::default()
    };
    let manifest = make_synth_corpus(&spec, dir.path().join("corpus"), 1).unwrap();
    let copies = dir.path().join("copies");
    fs::create_dir_all(&copies).unwrap();
    let kept = &manifest.records[0];
    fs::copy(manifest.audio_path(kept), copies.join(format!("{}.wav", kept.stem()))).unwrap();
    let report = evaluate_system("SYS", &manifest.records, &manifest.base_dir, &copies, DEFAULT_VOICING_THRESHOLD).unwrap();
    assert_eq!(report.missing.len(), 2);
    let instruments: Vec<&str> = report.rows.iter().map(|r| r.instrument.as_str()).collect();
    assert_eq!(instruments, [kept.instrument.as_str(), OVERALL]);
    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("system,instrument,pcc,vuv_pct,n_frames"));
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 5);
        assert_eq!(cells[0], "SYS");
        assert!(cells[2] == "NA" || cells[2].parse::<f64>().is_ok());
    }
}

#[test]
fn silent_system_reports_na() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthCorpusSpec {
        n_tracks: 1,
        seconds: 1.0,
        ..SynthCorpusSpec::default()
    };
    let manifest = make_synth_corpus(&spec, dir.path().join("corpus"), 2).unwrap();
    let copies = dir.path().join("copies");
    fs::create_dir_all(&copies).unwrap();
    let r = &manifest.records[0];
    let silent = nws_core::corpus::Waveform::new(vec![0.0; 24_000], 24_000).unwrap();
    nws_core::corpus::write_wav(&silent, copies.join(format!("{}.wav", r.stem())), 16).unwrap();
    let report = evaluate_system("MUTE", &manifest.records, &manifest.base_dir, &copies, DEFAULT_VOICING_THRESHOLD).unwrap();
    assert_eq!(report.overall().unwrap().pcc, None);
    assert!(report.to_csv().lines().nth(1).unwrap().contains(",NA,"));
}
