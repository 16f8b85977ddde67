//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

#[path = "../../core/tests/graph_gradcheck.rs"]
#[allow(dead_code)]
mod primitives;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nws_core::corpus::{make_synth_corpus, render_plan, PlannedNote, Split, SynthCorpusSpec, Waveform};
use nws_core::dsp::{
    mel_spectrogram, mu_law_compand, mu_law_decode, mu_law_encode, rainbowgram, resample_ratio, upsample_f0_replicate,
    FeatureProfile, QUANT_LEVELS,
};
use nws_core::eval::{evaluate_system, pcc_values, vuv_error_values, DEFAULT_VOICING_THRESHOLD, OVERALL};
use nws_core::graph::{load_checkpoint, save_checkpoint, CheckpointError, Tensor};
use nws_core::nsf::{multires_stft_loss, source_excitation, NsfConfig};
use nws_core::train::{
    grad_check_tiny, load_init, run_scenario, Arch, Batch, ModelSize, Scenario, SynthModel, TrainConfig, TrainError,
    Trainer,
};
use nws_core::wavenet::{cross_entropy_loss, WaveNetConfig, WaveNetModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn check<E: std::fmt::Display, T>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn c1_grad_check() -> Outcome {
    for (name, run) in primitives::PRIMITIVES {
        catch_unwind(*run).map_err(|_| format!("primitive {name} failed"))?;
    }
    let ts = FeatureProfile::ts();
    let nsf = check(grad_check_tiny(Arch::Nsf, ts, 1, 1e-5, 1e-4))?;
    ensure!(nsf.passed(), "tiny NSF: {:?}", nsf.worst());
    ensure!(nsf.blocks.iter().any(|b| b.name.starts_with("mvf.")), "MVF parameters were not checked");
    let wn = check(grad_check_tiny(Arch::WaveNet, ts, 1, 1e-5, 1e-4))?;
    ensure!(wn.passed(), "tiny WaveNet: {:?}", wn.worst());
    let worst = |r: &nws_core::graph::GradCheckReport| r.worst().map_or(0.0, |b| b.max_rel_error);
    Ok(format!(
        "{} primitives x {} seeds; NSF worst {:.1e}; WaveNet worst {:.1e}",
        primitives::PRIMITIVES.len(),
        100,
        worst(&nsf),
        worst(&wn)
    ))
}

fn random_cond(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::from_vec(rows, dim, (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn c2_wavenet_structure() -> Outcome {
    let p = FeatureProfile::ts();
    let config = WaveNetConfig::desk(p);
    let dim = config.cond.feature_dim();
    let rf = config.receptive_field();
    ensure!(rf == 3070, "configured receptive field {rf}");

    let model = check(WaveNetModel::new(config, 1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 200;
    let codes: Vec<u32> = (0..n).map(|_| rng.random_range(0..QUANT_LEVELS)).collect();
    let cond = random_cond(n, dim, &mut rng);
    let base = check(model.teacher_forced_forward(&codes, &cond))?;
    for pair in 0..100 {
        let t = rng.random_range(0..n);
        let mut moved = codes.clone();
        moved[t] = (codes[t] + rng.random_range(1..QUANT_LEVELS)) % QUANT_LEVELS;
        let out = check(model.teacher_forced_forward(&moved, &cond))?;
        ensure!(
            base.data[..(t + 1) * 1024] == out.data[..(t + 1) * 1024],
            "pair {pair}: changing code {t} moved an earlier or same-step logit"
        );
        ensure!(base.data[(t + 1) * 1024..] != out.data[(t + 1) * 1024..] || t + 1 == n, "pair {pair}: no later logit moved");
    }

    // Logit s sees codes s-rf ..= s-1, so a change to code 0 reaches
    // logit rf and stops before rf + 1.
    let len = rf + 2;
    for seed in 0..20u64 {
        let m = check(WaveNetModel::new(config, 100 + seed))?;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let codes: Vec<u32> = (0..len).map(|_| r.random_range(0..QUANT_LEVELS)).collect();
        let cond = random_cond(len, dim, &mut r);
        let mut moved = codes.clone();
        moved[0] = QUANT_LEVELS - 1 - codes[0].min(QUANT_LEVELS / 2 - 1);
        let a = check(m.teacher_forced_forward_f64(&codes, &cond))?;
        let b = check(m.teacher_forced_forward_f64(&moved, &cond))?;
        let row = |t: &Tensor<f64>, s: usize| t.data[s * 1024..(s + 1) * 1024].to_vec();
        ensure!(row(&a, rf) != row(&b, rf), "seed {seed}: code 0 does not reach logit {rf}");
        ensure!(row(&a, rf + 1) == row(&b, rf + 1), "seed {seed}: code 0 reaches logit {}", rf + 1);
    }

    let mut zeroed = check(WaveNetModel::new(config, 3))?;
    for t in zeroed.store_mut().tensors_mut().iter_mut().filter(|t| t.name.starts_with("out2.")) {
        t.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let logits = check(zeroed.teacher_forced_forward(&codes, &cond))?;
    let ce = check(cross_entropy_loss(&logits, &codes))?;
    let err = (ce - (1024f64).ln()).abs();
    ensure!(err < 1e-6, "uniform-logit CE {ce} is {err:e} from ln 1024");
    Ok(format!("RF {rf}, 100 causal pairs, 20 RF seeds, |CE - ln 1024| = {err:.1e}"))
}

fn c3_nsf_pitch() -> Outcome {
    let p = FeatureProfile::ts();
    let cfg = NsfConfig::desk(p);
    let n = p.sample_rate as usize;
    for f0 in [110.0f32, 220.0, 300.0, 440.0, 987.5] {
        let src = check(source_excitation(&vec![f0; n], p.sample_rate, cfg.sine_amplitude, cfg.noise_std, 4))?;
        let wave = check(Waveform::new(src.harmonic, p.sample_rate))?;
        let rg = check(rainbowgram(&wave, &p))?;
        let peak = rg.dominant_frequency().ok_or("no dominant frequency")?;
        ensure!((peak - f0 as f64).abs() < 1.0, "excitation at {f0} Hz has IF {peak:.3} Hz");
    }

    let frames = 20;
    let len = frames * p.hop;
    let target = render_plan(&[PlannedNote { start: 0, end: len, f0_hz: 300.0 }], p.sample_rate, 11);
    let wave = check(Waveform::new(target.clone(), p.sample_rate))?;
    let batch = Batch {
        mel: check(mel_spectrogram(&wave, &p))?,
        f0: vec![300.0; frames],
        audio: target.clone(),
    };
    const EXCITATION_SEED: u64 = 5;
    let model = check(SynthModel::new(Arch::Nsf, ModelSize::Desk, p, 1))?;
    let loss_of = |m: &SynthModel| -> Result<(f64, Waveform), String> {
        let y = check(m.synthesize(&batch.mel, &batch.f0, EXCITATION_SEED))?;
        Ok((check(multires_stft_loss(&y.samples, &target))?, y))
    };
    let (initial, _) = loss_of(&model)?;
    let mut trainer = Trainer::new(model, 1e-3);
    for _ in 0..500 {
        check(trainer.step(&batch, EXCITATION_SEED))?;
    }
    let (fin, y) = loss_of(&trainer.into_model())?;
    let reduction = 1.0 - fin / initial;
    ensure!(reduction >= 0.9, "multires loss fell only {:.1}% ({initial:.3} -> {fin:.3})", 100.0 * reduction);
    let peak = check(rainbowgram(&y, &p))?.dominant_frequency().ok_or("silent output")?;
    ensure!((peak - 300.0).abs() <= 3.0, "rainbow-gram peak {peak:.2} Hz");
    Ok(format!("IF within 1 Hz; overfit peak {peak:.2} Hz, loss -{:.1}%", 100.0 * reduction))
}

fn bits(ckpt_tensors: &[(String, Vec<u32>)], model: &SynthModel) -> bool {
    let ours: Vec<(String, Vec<u32>)> =
        model.store().tensors().iter().map(|t| (t.name.clone(), t.data.iter().map(|v| v.to_bits()).collect())).collect();
    ours == ckpt_tensors
}

fn c4_scenarios() -> Outcome {
    let dir = check(tempfile::tempdir())?;
    let ts = FeatureProfile::ts();
    let path = dir.path().join("pre.ckpt");
    let pre = check(SynthModel::new(Arch::Nsf, ModelSize::Tiny, ts, 9))?;
    check(save_checkpoint(&pre.to_checkpoint(), &path))?;
    let stored = check(load_checkpoint(&path))?;
    ensure!(stored == pre.to_checkpoint(), "checkpoint roundtrip changed contents");
    let stored_bits: Vec<(String, Vec<u32>)> =
        stored.tensors.iter().map(|t| (t.name.clone(), t.data.iter().map(|v| v.to_bits()).collect())).collect();

    let mut config = TrainConfig::new(Arch::Nsf, Scenario::ZeroShot, ts);
    config.init_checkpoint = Some(path.clone());
    let zero = check(run_scenario(&config, None))?;
    ensure!(bits(&stored_bits, &zero.model) && zero.losses.is_empty(), "zero-shot weights differ from the checkpoint");
    config.scenario = Scenario::FineTune;
    config.max_steps = 0;
    let ft0 = check(run_scenario(&config, None))?;
    ensure!(bits(&stored_bits, &ft0.model), "fine-tune with 0 steps differs from zero-shot");

    let mut ft = TrainConfig::new(Arch::Nsf, Scenario::FineTune, FeatureProfile::ft());
    ft.init_checkpoint = Some(path.clone());
    ensure!(
        matches!(run_scenario(&ft, None), Err(TrainError::ProfileMismatch { .. })),
        "TS checkpoint accepted for an FT run"
    );
    ensure!(
        matches!(load_init(&path, Arch::WaveNet, &ts), Err(TrainError::Checkpoint(CheckpointError::ArchMismatch { .. }))),
        "NSF checkpoint accepted as WaveNet"
    );

    let bytes = check(fs::read(&path))?;
    let again = dir.path().join("again.ckpt");
    check(save_checkpoint(&stored, &again))?;
    ensure!(check(fs::read(&again))? == bytes, "re-encoding is not byte-identical");
    let cut = dir.path().join("cut.ckpt");
    let step = (bytes.len() / 97).max(1);
    let mut cuts = 0;
    for len in (0..bytes.len()).step_by(step).chain([bytes.len() - 1]) {
        check(fs::write(&cut, &bytes[..len]))?;
        ensure!(load_checkpoint(&cut).is_err(), "checkpoint truncated to {len} bytes loaded");
        cuts += 1;
    }
    Ok(format!("zero-shot and 0-step fine-tune bit-equal; {cuts} truncations rejected"))
}

fn brute_pcc(a: &[f32], b: &[f32]) -> Option<f64> {
    let (mut n, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0f64, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        if x > 0.0 && y > 0.0 {
            let (x, y) = (x as f64, y as f64);
            n += 1.0;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
    }
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if n < 2.0 || vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some((n * sxy - sx * sy) / (vx * vy).sqrt())
}

fn c5_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f32> {
        (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(50.0..1000.0) }).collect()
    };
    for pair in 0..1000 {
        let n = rng.random_range(2..200);
        let a = draw(n, &mut rng);
        let b = draw(n, &mut rng);
        match (pcc_values(&a, &b), brute_pcc(&a, &b)) {
            (Some(x), Some(y)) => ensure!((x - y).abs() < 1e-10, "pair {pair}: PCC {x} vs {y}"),
            (None, None) => {}
            (x, y) => return Err(format!("pair {pair}: PCC {x:?} vs {y:?}")),
        }
        let disagree = a.iter().zip(&b).filter(|(x, y)| (**x > 0.0) != (**y > 0.0)).count();
        let expect = 100.0 * disagree as f64 / n as f64;
        let got = check(vuv_error_values(&a, &b))?;
        ensure!((got - expect).abs() < 1e-10, "pair {pair}: V/UV {got} vs {expect}");
    }
    let small = pcc_values(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).ok_or("undefined PCC")?;
    ensure!((small - 0.5).abs() < 1e-12, "[1,2,3] vs [1,3,2] gave {small}");

    let dir = check(tempfile::tempdir())?;
    let manifest = check(make_synth_corpus(&SynthCorpusSpec::default(), dir.path().join("corpus"), 0))?;
    let copies = dir.path().join("copies");
    check(fs::create_dir_all(&copies))?;
    let test: Vec<_> = manifest.records.iter().filter(|r| r.split == Split::Test).cloned().collect();
    for r in &test {
        check(fs::copy(manifest.audio_path(r), copies.join(format!("{}.wav", r.stem()))))?;
    }
    let report = check(evaluate_system("NAT", &test, &manifest.base_dir, &copies, DEFAULT_VOICING_THRESHOLD))?;
    let all = report.rows.iter().find(|r| r.instrument == OVERALL).ok_or("no overall row")?;
    let pcc = all.pcc.ok_or("overall PCC undefined")?;
    ensure!((0.9..1.0).contains(&pcc), "natural-copy PCC {pcc}");
    ensure!(all.vuv_pct <= 10.0, "natural-copy V/UV {}%", all.vuv_pct);
    Ok(format!("1000 pairs exact; natural copies PCC {pcc:.4}, V/UV {:.2}%", all.vuv_pct))
}

fn c6_features() -> Outcome {
    for (p, expect) in [(FeatureProfile::ts(), 200), (FeatureProfile::ft(), 87)] {
        let wave = check(Waveform::new(vec![0.1; p.sample_rate as usize], p.sample_rate))?;
        let mel = check(mel_spectrogram(&wave, &p))?;
        ensure!(mel.frames == expect, "1 s at {} gave {} frames", p.name, mel.frames);
        ensure!(mel.n_mels == 80 && mel.data.len() == mel.frames * 80, "{} mel has {} dims", p.name, mel.n_mels);
        let f0 = vec![100.0f32; mel.frames];
        let up = upsample_f0_replicate(&f0, p.hop);
        ensure!(up.len() == mel.frames * p.hop, "upsampled length {}", up.len());
    }
    let mut last = 0u32;
    let cell = 1.0 / (QUANT_LEVELS - 1) as f64;
    for i in 0..=20_000 {
        let x = -1.0 + 2.0 * i as f64 / 20_000.0;
        let code = mu_law_encode(x);
        ensure!(code >= last, "mu-law code decreased at {x}");
        last = code;
        let back = check(mu_law_decode(code))?;
        let gap = (mu_law_compand(back) - mu_law_compand(x)).abs();
        ensure!(gap <= cell + 1e-12, "roundtrip of {x} left its cell ({gap:e})");
    }
    ensure!(last == QUANT_LEVELS - 1 && mu_law_encode(-1.0) == 0, "code range does not span 0..1023");
    let ratio = resample_ratio(48_000, 22_050);
    ensure!(ratio == (147, 320), "48k -> 22.05k ratio {ratio:?}");
    Ok("200/87 frames, 80 dims, mu-law monotonic, upsample and 147/320 exact".into())
}

fn run_nws(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nws"))
        .args(args)
        .env("NWS_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("nws {} exited {}: {}", args.join(" "), out.status, String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(())
}

fn pipeline(root: &Path) -> Result<(), String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let manifest = p("corpus/manifest.tsv");
    run_nws(&["--seed", "7", "make-synth-corpus", "--out", &p("corpus"), "--tracks", "6", "--seconds", "2"])?;
    run_nws(&["features", "--manifest", &manifest, "--out", &p("feat"), "--split", "test"])?;
    run_nws(&[
        "--seed", "7", "train", "--arch", "nsf", "--scenario", "scratch", "--size", "tiny", "--manifest", &manifest,
        "--steps", "200", "--lr", "1e-3", "--out", &p("nsf.ckpt"), "--loss-log", &p("loss.csv"),
    ])?;
    run_nws(&["--seed", "7", "synth", "--ckpt", &p("nsf.ckpt"), "--features", &p("feat"), "--out", &p("synth")])?;
    run_nws(&["eval", "--manifest", &manifest, "--synth-dir", &p("synth"), "--system", "NSF", "--out", &p("report.csv")])
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let path = e.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn c7_cli_pipeline() -> Outcome {
    let dir = check(tempfile::tempdir())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&a)?;
    pipeline(&b)?;
    let files = files_under(&a);
    ensure!(files == files_under(&b), "runs produced different file sets");
    for f in &files {
        ensure!(check(fs::read(a.join(f)))? == check(fs::read(b.join(f)))?, "{} differs between runs", f.display());
    }
    let report = check(fs::read_to_string(a.join("report.csv")))?;
    ensure!(report.starts_with("system,instrument,pcc,vuv_pct,n_frames\n"), "unexpected report header");
    Ok(format!("{} output files byte-identical across two runs", files.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 7] = [
        ("1 grad_check", c1_grad_check, 120),
        ("2 wavenet structure", c2_wavenet_structure, 60),
        ("3 nsf pitch fidelity", c3_nsf_pitch, 600),
        ("4 scenario semantics", c4_scenarios, 60),
        ("5 metric oracles", c5_metrics, 180),
        ("6 feature pipeline", c6_features, 60),
        ("7 cli pipeline", c7_cli_pipeline, 900),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match result {
            Ok(_) if elapsed > Duration::from_secs(budget) => Err(format!("took {:.1} s, budget {budget} s", elapsed.as_secs_f64())),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS criterion {name} ({:.1} s): {detail}", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name} ({:.1} s): {why}", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
