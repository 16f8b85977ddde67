use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::info;
use nws_core::corpus::{
    corpus_stats, make_synth_corpus, parse_f0_labels, read_wav, segment_track, write_wav, CorpusManifest, Split,
    SynthCorpusSpec,
};
use nws_core::dsp::{read_mel, rainbowgram, resample, write_mel, FeatureProfile};
use nws_core::eval::evaluate_system;
use nws_core::graph::{load_checkpoint, save_checkpoint};
use nws_core::train::{
    grad_check_tiny, run_scenario, write_loss_csv, Arch, ModelSize, Scenario, SynthModel, TrackFeatures, TrainConfig,
    TrainError, TrainingSet,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::{
    render, ArchArg, Cli, Command, EvalArgs, FeaturesArgs, GradcheckArgs, MakeCorpusArgs, RainbowArgs, ScenarioArg,
    SegmentArgs, SizeArg, SplitArg, StatsArgs, SynthArgs, TrainArgs,
};

const WAV_BITS: u16 = 16;
const MEL_EXT: &str = "mel";
const F0_EXT: &str = "f0frames";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Failed(#[from] anyhow::Error),
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let profile = cli.profile.profile();
    match &cli.command {
        Command::MakeSynthCorpus(a) => make_corpus(a, cli.seed),
        Command::Features(a) => features(a, &profile),
        Command::Train(a) => train(a, &profile, cli.seed),
        Command::Synth(a) => synth(a, &profile, cli.seed),
        Command::Eval(a) => eval(a),
        Command::Rainbowgram(a) => rainbow(a, &profile),
        Command::Stats(a) => stats(a),
        Command::Segment(a) => segment(a),
        Command::Gradcheck(a) => gradcheck(a, profile, cli.seed),
    }
}

impl From<ArchArg> for Arch {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Nsf => Arch::Nsf,
            ArchArg::Wavenet => Arch::WaveNet,
        }
    }
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Scratch => Scenario::Scratch,
            ScenarioArg::ZeroShot => Scenario::ZeroShot,
            ScenarioArg::FineTune => Scenario::FineTune,
        }
    }
}

impl From<SizeArg> for ModelSize {
    fn from(s: SizeArg) -> Self {
        match s {
            SizeArg::Tiny => ModelSize::Tiny,
            SizeArg::Desk => ModelSize::Desk,
            SizeArg::Full => ModelSize::Full,
        }
    }
}

impl SplitArg {
    fn select(self, manifest: CorpusManifest) -> CorpusManifest {
        match self {
            SplitArg::Train => manifest.subset(Split::Train),
            SplitArg::Dev => manifest.subset(Split::Dev),
            SplitArg::Test => manifest.subset(Split::Test),
            SplitArg::All => manifest,
        }
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_manifest(path: &Path) -> anyhow::Result<CorpusManifest> {
    CorpusManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn make_corpus(a: &MakeCorpusArgs, seed: u64) -> Result<()> {
    let spec = SynthCorpusSpec {
        n_tracks: a.tracks,
        seconds: a.seconds,
        sample_rate: a.sample_rate,
        ..SynthCorpusSpec::default()
    };
    let manifest = make_synth_corpus(&spec, &a.out, seed).context("writing synthetic corpus")?;
    for r in &manifest.records {
        println!("track {} instrument={} piece={} split={}", r.stem(), r.instrument, r.piece_id, r.split);
    }
    println!("manifest {}", a.out.join("manifest.tsv").display());
    Ok(())
}

pub fn write_frame_f0(f0: &[f32], path: &Path) -> anyhow::Result<()> {
    let text: String = f0.iter().map(|v| format!("{v}\n")).collect();
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_frame_f0(path: &Path) -> anyhow::Result<Vec<f32>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f32>()
                .with_context(|| format!("{}:{}: bad F0 value {l:?}", path.display(), i + 1))
        })
        .collect()
}

fn features(a: &FeaturesArgs, profile: &FeatureProfile) -> Result<()> {
    let manifest = a.split.select(load_manifest(&a.manifest)?);
    if manifest.records.is_empty() {
        return Err(CliError::Usage("manifest has no tracks in the selected split".into()));
    }
    create_dir(&a.out)?;
    let done: Vec<anyhow::Result<(String, usize)>> = manifest
        .records
        .par_iter()
        .map(|r| {
            let wave = read_wav(manifest.audio_path(r))?;
            let labels = parse_f0_labels(manifest.f0_path(r))?;
            let tf = TrackFeatures::extract(&wave, &labels, profile).with_context(|| format!("track {}", r.stem()))?;
            let stem = r.stem();
            write_mel(&tf.mel, a.out.join(format!("{stem}.{MEL_EXT}")))?;
            write_frame_f0(&tf.f0, &a.out.join(format!("{stem}.{F0_EXT}")))?;
            Ok((stem, tf.mel.frames))
        })
        .collect();
    for d in done {
        let (stem, frames) = d?;
        println!("features {stem} frames={frames}");
    }
    Ok(())
}

fn train(a: &TrainArgs, profile: &FeatureProfile, seed: u64) -> Result<()> {
    let scenario = Scenario::from(a.scenario);
    if scenario != Scenario::Scratch && a.init_ckpt.is_none() {
        return Err(CliError::Usage(format!("--scenario {scenario} requires --init-ckpt")));
    }
    if scenario == Scenario::Scratch && a.init_ckpt.is_some() {
        return Err(CliError::Usage("--init-ckpt is not allowed with --scenario scratch".into()));
    }
    let mut config = TrainConfig::new(a.arch.into(), scenario, *profile);
    config.learning_rate = a.lr;
    config.max_steps = a.steps;
    config.seed = seed;
    config.init_checkpoint = a.init_ckpt.clone();
    config.model_size = a.size.into();
    if let Some(c) = a.crop_samples {
        config.crop_samples = c;
    }
    let needs_data = scenario != Scenario::ZeroShot && config.max_steps > 0;
    let data = match (&a.manifest, needs_data) {
        (Some(path), true) => Some(TrainingSet::from_manifest(&load_manifest(path)?, profile).context("extracting training features")?),
        (None, true) => return Err(CliError::Usage(format!("--scenario {scenario} with --steps > 0 requires --manifest"))),
        (_, false) => None,
    };
    info!("training {} {} for {} steps", config.arch, scenario, config.max_steps);
    let outcome = match run_scenario(&config, data.as_ref()) {
        Err(TrainError::CropTooShort(n)) => return Err(CliError::Usage(format!("--crop-samples {n} is shorter than one hop"))),
        other => other.context("training")?,
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_checkpoint(&outcome.model.to_checkpoint(), &a.out).context("saving checkpoint")?;
    if let Some(log_path) = &a.loss_log {
        write_loss_csv(&outcome.losses, log_path).context("writing loss log")?;
    }
    if let Some((step, loss)) = outcome.losses.last() {
        println!("final step={step} loss={loss}");
    }
    println!("checkpoint {}", a.out.display());
    Ok(())
}

/// Stems with a `.mel` file in `dir`, sorted.
fn feature_stems(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut stems = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == MEL_EXT) {
            if let Some(s) = path.file_stem() {
                stems.push(s.to_string_lossy().into_owned());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

fn synth(a: &SynthArgs, profile: &FeatureProfile, seed: u64) -> Result<()> {
    let ckpt = load_checkpoint(&a.ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    if ckpt.profile != profile.name {
        return Err(CliError::Failed(anyhow!(
            "profile mismatch: checkpoint uses {}, --profile is {}",
            ckpt.profile,
            profile.name
        )));
    }
    let model = SynthModel::from_checkpoint(&ckpt).context("building model")?;
    let stems = feature_stems(&a.features)?;
    if stems.is_empty() {
        return Err(CliError::Usage(format!("no .{MEL_EXT} files in {}", a.features.display())));
    }
    create_dir(&a.out)?;
    let done: Vec<anyhow::Result<(String, usize)>> = stems
        .par_iter()
        .enumerate()
        .map(|(i, stem)| {
            let mel = read_mel(a.features.join(format!("{stem}.{MEL_EXT}")))?;
            let f0 = read_frame_f0(&a.features.join(format!("{stem}.{F0_EXT}")))?;
            let wave = model
                .synthesize(&mel, &f0, seed.wrapping_add(i as u64))
                .with_context(|| format!("synthesizing {stem}"))?;
            write_wav(&wave, a.out.join(format!("{stem}.wav")), WAV_BITS)?;
            Ok((stem.clone(), wave.len()))
        })
        .collect();
    for d in done {
        let (stem, n) = d?;
        println!("synth {stem} samples={n}");
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let manifest = a.split.select(load_manifest(&a.manifest)?);
    if manifest.records.is_empty() {
        return Err(CliError::Usage("manifest has no tracks in the selected split".into()));
    }
    let report = evaluate_system(&a.system, &manifest.records, &manifest.base_dir, &a.synth_dir, a.voicing_threshold)
        .context("evaluating")?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    report.write_csv(&a.out).context("writing report")?;
    print!("{}", report.to_csv());
    for m in &report.missing {
        println!("missing {}", m.display());
    }
    if !report.missing.is_empty() {
        return Err(CliError::Failed(anyhow!(
            "{} synthesized file(s) missing, their rows were skipped",
            report.missing.len()
        )));
    }
    Ok(())
}

fn rainbow(a: &RainbowArgs, profile: &FeatureProfile) -> Result<()> {
    if a.out_csv.is_none() && a.out_png.is_none() {
        return Err(CliError::Usage("give --out-csv, --out-png or both".into()));
    }
    let wave = read_wav(&a.wav).with_context(|| format!("reading {}", a.wav.display()))?;
    let wave = if wave.sample_rate == profile.sample_rate {
        wave
    } else {
        resample(&wave, profile.sample_rate).context("resampling")?
    };
    let rg = rainbowgram(&wave, profile).context("analysing")?;
    if let Some(path) = &a.out_csv {
        fs::write(path, rg.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.out_png {
        render::rainbowgram_image(&rg)
            .save(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    match rg.dominant_frequency() {
        Some(f) => println!("frames={} bins={} dominant_hz={f:.3}", rg.frames, rg.bins),
        None => println!("frames={} bins={} dominant_hz=NA", rg.frames, rg.bins),
    }
    Ok(())
}

fn stats(a: &StatsArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let csv = corpus_stats(&manifest).context("computing statistics")?.to_csv();
    match &a.out {
        Some(path) => fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn segment(a: &SegmentArgs) -> Result<()> {
    if !(a.max_seconds > 0.0) {
        return Err(CliError::Usage("--max-seconds must be positive".into()));
    }
    let wave = read_wav(&a.wav).with_context(|| format!("reading {}", a.wav.display()))?;
    let pieces = segment_track(&wave, a.max_seconds).context("segmenting")?;
    create_dir(&a.out)?;
    let stem = a.wav.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "track".into());
    for (i, piece) in pieces.iter().enumerate() {
        let path: PathBuf = a.out.join(format!("{stem}_{i:03}.wav"));
        write_wav(piece, &path, WAV_BITS).with_context(|| format!("writing {}", path.display()))?;
        println!("segment {} seconds={:.3}", path.display(), piece.duration_s());
    }
    Ok(())
}

fn gradcheck(a: &GradcheckArgs, profile: FeatureProfile, seed: u64) -> Result<()> {
    let report = grad_check_tiny(a.arch.into(), profile, seed, a.step, a.tolerance).context("gradient check")?;
    println!("block,max_rel_error,max_abs_error,passed");
    for b in &report.blocks {
        println!("{},{:e},{:e},{}", b.name, b.max_rel_error, b.max_abs_error, b.passed);
    }
    if !report.passed() {
        let worst = report.worst().map(|b| b.name.clone()).unwrap_or_default();
        return Err(CliError::Failed(anyhow!("gradient check failed, worst block {worst}")));
    }
    Ok(())
}
