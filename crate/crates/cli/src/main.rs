mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nws_core::dsp::{FeatureProfile, ProfileName};

/// Neural waveform synthesis workbench: corpus tools, feature extraction,
/// NSF and WaveNet training, synthesis and pitch evaluation.
#[derive(Debug, Parser)]
#[command(name = "nws", version)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Feature profile: TS (24 kHz, hop 120) or FT (22.05 kHz, hop 256).
    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Ts)]
    pub profile: ProfileArg,
    /// Worker threads for per-track operations.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    #[value(name = "TS", alias = "ts")]
    Ts,
    #[value(name = "FT", alias = "ft")]
    Ft,
}

impl ProfileArg {
    pub fn profile(self) -> FeatureProfile {
        FeatureProfile::by_name(match self {
            ProfileArg::Ts => ProfileName::TS,
            ProfileArg::Ft => ProfileName::FT,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Nsf,
    Wavenet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Scratch,
    ZeroShot,
    FineTune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SizeArg {
    Tiny,
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic corpus with F0 labels and a manifest.
    MakeSynthCorpus(MakeCorpusArgs),
    /// Extract mel spectrograms (MEL0) and frame-aligned F0 per track.
    Features(FeaturesArgs),
    /// Train or load a synthesizer under one of the three scenarios.
    Train(TrainArgs),
    /// Synthesize one WAV per feature file.
    Synth(SynthArgs),
    /// Score synthesized audio against reference F0 labels.
    Eval(EvalArgs),
    /// Magnitude and instantaneous-frequency analysis of a WAV.
    Rainbowgram(RainbowArgs),
    /// Per-instrument track counts, durations and F0 ranges.
    Stats(StatsArgs),
    /// Split a WAV into pieces of at most --max-seconds.
    Segment(SegmentArgs),
    /// Check backward against finite differences on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct MakeCorpusArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub tracks: usize,
    #[arg(long, default_value_t = 4.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 48_000)]
    pub sample_rate: u32,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for `<stem>.mel` and `<stem>.f0frames`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub arch: ArchArg,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Scratch)]
    pub scenario: ScenarioArg,
    /// Pre-trained checkpoint; required for zero-shot and fine-tune.
    #[arg(long)]
    pub init_ckpt: Option<PathBuf>,
    /// Training data; its train split is used.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Crop length in samples (default: one second at the profile rate).
    #[arg(long)]
    pub crop_samples: Option<usize>,
    /// Model preset for scratch training.
    #[arg(long, value_enum, default_value_t = SizeArg::Desk)]
    pub size: SizeArg,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step loss CSV (`step,loss`).
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Directory written by `features`.
    #[arg(long)]
    pub features: PathBuf,
    /// Output directory for `<stem>.wav`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub synth_dir: PathBuf,
    /// Report CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// System name written in the report.
    #[arg(long, default_value = "SYS")]
    pub system: String,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Normalized-autocorrelation peak needed to call a frame voiced.
    #[arg(long, default_value_t = nws_core::eval::DEFAULT_VOICING_THRESHOLD)]
    pub voicing_threshold: f64,
}

#[derive(Debug, Args)]
pub struct RainbowArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_png: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// CSV to write; printed to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub wav: PathBuf,
    /// Output directory for `<stem>_NNN.wav`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 15.0)]
    pub max_seconds: f64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum)]
    pub arch: ArchArg,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

/// Prints one `error: <kind>: <message>` line and picks the exit code.
fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    let one_line = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error: {kind}: {one_line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NWS_LOG", "error"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return report("usage", first, 2);
        }
    };
    println!("config: {cli:?} resolved_profile={:?}", cli.profile.profile());
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build_global() {
        return report("runtime", &e.to_string(), 1);
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(m)) => report("usage", &m, 2),
        Err(commands::CliError::Failed(e)) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            report("failed", &chain.join(": "), 1)
        }
    }
}
