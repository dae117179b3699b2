//! `pianosync` command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 when a
//! command fails at run time.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pianosync_core::crnn::RnnCell;
use pianosync_core::features::FeatureKind;
use pianosync_core::pipeline::FeatureScale;
use pianosync_core::{Method, PipelineConfig};

#[derive(Parser, Debug)]
#[command(
    name = "pianosync",
    version,
    about = "Fine alignment of piano MIDI to audio recordings"
)]
struct Cli {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Seed for corpus generation, augmentation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic corpus and build a split dataset from it.
    Synth(SynthArgs),
    /// Draw new unaligned MIDI for every triplet of a dataset.
    Augment(AugmentArgs),
    /// Compute the network's spectrogram input of a WAV file as CSV.
    Features(FeaturesArgs),
    /// Train the alignment network on a dataset.
    Train(TrainArgs),
    /// Align unaligned MIDI to audio, for one file pair or a dataset split.
    Align(AlignArgs),
    /// Onset-error report of estimated against reference MIDI.
    Evaluate(EvaluateArgs),
    /// Run every point of the configured experiment grid.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Default)]
struct AugmentFlags {
    /// Largest onset/offset shift in seconds.
    #[arg(long)]
    max_dev: Option<f64>,
    /// Tempo factors are drawn from [1 - F, 1 + F].
    #[arg(long, value_name = "F")]
    max_tempo_factor: Option<f64>,
    /// Target segment length in seconds.
    #[arg(long)]
    segment_len: Option<f64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pieces: Option<usize>,
    /// Length of each piece in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    valid_pieces: Option<usize>,
    #[arg(long)]
    test_pieces: Option<usize>,
    #[command(flatten)]
    augment: AugmentFlags,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Manifest of the source dataset.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    augment: AugmentFlags,
}

#[derive(Args, Debug, Default)]
struct FeatureFlags {
    #[arg(long, value_parser = parse_kind)]
    kind: Option<FeatureKind>,
    #[arg(long, value_parser = parse_scale)]
    scale: Option<FeatureScale>,
    #[arg(long)]
    fps: Option<u32>,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureFlags,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset manifest (defaults to `paths.dataset`).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Weight file to write.
    #[arg(long)]
    out: PathBuf,
    /// Training-log CSV (defaults to the weight path with `.log.csv`).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Train on DTW-prealigned input rolls.
    #[arg(long)]
    prealign: bool,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    min_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_parser = parse_cell)]
    cell: Option<RnnCell>,
    /// Zero the piano-roll branch input.
    #[arg(long)]
    blind: bool,
    #[command(flatten)]
    features: FeatureFlags,
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Unaligned MIDI file (single-file mode).
    #[arg(long, requires = "audio", conflicts_with = "manifest")]
    midi: Option<PathBuf>,
    #[arg(long, requires = "midi")]
    audio: Option<PathBuf>,
    /// Dataset manifest (dataset mode).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Split aligned in dataset mode.
    #[arg(long, value_parser = parse_split)]
    split: Option<pianosync_core::augment::Split>,
    /// Output MIDI file, or directory in dataset mode.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    dtw_weights: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Also write DTW paths as CSV (file in single-file mode, one per
    /// triplet in dataset mode).
    #[arg(long)]
    path_csv: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureFlags,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Estimated MIDI file (single-file mode).
    #[arg(long, requires = "reference", conflicts_with = "manifest")]
    est: Option<PathBuf>,
    #[arg(long, requires = "est")]
    reference: Option<PathBuf>,
    /// Dataset manifest whose aligned MIDI serves as reference.
    #[arg(long, requires = "estimates")]
    manifest: Option<PathBuf>,
    /// Directory of `<name>.est.mid` files written by `align`.
    #[arg(long)]
    estimates: Option<PathBuf>,
    #[arg(long, value_parser = parse_split)]
    split: Option<pianosync_core::augment::Split>,
    /// Row label in the comparison table.
    #[arg(long, default_value = "estimate")]
    label: String,
    /// JSON report with per-note errors.
    #[arg(long)]
    out: PathBuf,
    /// Aggregate table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Output directory (defaults to `paths.output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run only this grid point.
    #[arg(long)]
    point: Option<usize>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: pianosync_core::Error| e.to_string())
}

fn parse_scale(s: &str) -> Result<FeatureScale, String> {
    s.parse().map_err(|e: pianosync_core::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<pianosync_core::augment::Split, String> {
    s.parse().map_err(|e: pianosync_core::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<FeatureKind, String> {
    match s {
        "cqt" => Ok(FeatureKind::Cqt),
        "mel" => Ok(FeatureKind::Mel),
        other => Err(format!(
            "unknown feature kind '{other}' (expected cqt or mel)"
        )),
    }
}

fn parse_cell(s: &str) -> Result<RnnCell, String> {
    match s {
        "lstm" => Ok(RnnCell::Lstm),
        "gru" => Ok(RnnCell::Gru),
        other => Err(format!("unknown rnn cell '{other}' (expected lstm or gru)")),
    }
}

/// Failure of a command, split into the two non-zero exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<pianosync_core::Error> for Failure {
    fn from(e: pianosync_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)
            .map_err(|e| Failure::Usage(format!("cannot load config {}: {e}", path.display())))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth(a) => commands::synth(cfg, a),
        Command::Augment(a) => commands::augment(cfg, a),
        Command::Features(a) => commands::features(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Align(a) => commands::align(cfg, a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Experiment(a) => commands::experiment(cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
