use std::path::Path;
use std::process::{Command, Output};

fn nws(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nws")).args(args).env_remove("NWS_LOG").output().expect("spawn nws")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn corpus(dir: &Path, tracks: &str) -> String {
    let out = dir.join("corpus");
    let o = nws(&["make-synth-corpus", "--out", out.to_str().unwrap(), "--tracks", tracks, "--seconds", "1", "--seed", "3"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    out.join("manifest.tsv").to_str().unwrap().to_string()
}

#[test]
fn help_lists_global_flags_and_subcommands() {
    let o = nws(&["--help"]);
    assert!(o.status.success());
    let help = text(&o.stdout);
    for word in ["--seed", "--profile", "--threads", "make-synth-corpus", "features", "train", "synth", "eval", "rainbowgram", "stats", "segment", "gradcheck"] {
        assert!(help.contains(word), "help lacks {word}");
    }
    let train = text(&nws(&["train", "--help"]).stdout);
    for word in ["--arch", "--scenario", "--init-ckpt", "--steps", "--lr", "--out", "--seed"] {
        assert!(train.contains(word), "train help lacks {word}");
    }
}

#[test]
fn zero_shot_without_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.ckpt");
    let o = nws(&["train", "--arch", "nsf", "--scenario", "zero-shot", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: usage:"), "{err}");
    assert!(!out.exists());
}

#[test]
fn bad_flags_give_one_line_errors() {
    for args in [&["--profile", "XX", "stats", "--manifest", "m"][..], &["train"], &["nope"]] {
        let o = nws(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(text(&o.stderr).lines().count(), 1, "{args:?}");
    }
    let o = nws(&["stats", "--manifest", "/no/such/manifest.tsv"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(text(&o.stderr).lines().count(), 1);
}

#[test]
fn resolved_config_goes_to_stdout_and_stderr_stays_quiet() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), "2");
    let o = nws(&["--profile", "FT", "stats", "--manifest", &manifest]);
    assert!(o.status.success());
    let out = text(&o.stdout);
    assert!(out.lines().next().unwrap().starts_with("config: "), "{out}");
    assert!(out.contains("sample_rate: 22050"), "{out}");
    assert!(o.stderr.is_empty(), "{}", text(&o.stderr));
}

#[test]
fn eval_lists_missing_files_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), "6");
    let synth = dir.path().join("synth");
    std::fs::create_dir_all(&synth).unwrap();
    let report = dir.path().join("report.csv");
    let o = nws(&[
        "eval",
        "--manifest",
        &manifest,
        "--synth-dir",
        synth.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let out = text(&o.stdout);
    assert!(out.lines().any(|l| l.starts_with("missing ")), "{out}");
    let csv = std::fs::read_to_string(&report).unwrap();
    assert_eq!(csv, "system,instrument,pcc,vuv_pct,n_frames\n");
}

#[test]
fn gradcheck_subcommand_passes() {
    let o = nws(&["gradcheck", "--arch", "nsf", "--seed", "2"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
}
