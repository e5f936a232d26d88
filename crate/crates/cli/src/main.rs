mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use copyalign_core::{Error, Weighting};

use config::RunConfig;

/// Partial video copy detection: learned mask/step maps over frame similarity
/// and alignment of copied segment pairs.
#[derive(Debug, Parser)]
#[command(name = "copyalign", version)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Gen(GenArgs),
    /// Train the encoder and mask/step network on a dataset.
    Train(TrainArgs),
    /// Detect copied segment pairs between two sequences or over a dataset.
    Detect(DetectArgs),
    /// Score detections against annotations.
    Eval(EvalArgs),
    /// Run the ablation arms and the τ/σ/γ sweep on a dataset's held-out split.
    Ablate(AblateArgs),
    /// Write similarity, mask and step maps for one pair.
    ExportMaps(ExportMapsArgs),
    /// Finite-difference gradient checks.
    GradCheck(GradCheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Generator seed [default: 7].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training pairs [default: 2000].
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Held-out positive pairs [default: 200].
    #[arg(long)]
    pub heldout: Option<usize>,
    /// Negative pairs [default: 200].
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Feature dimension W [default: 32].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Sequence length after resampling [default: 16].
    #[arg(long)]
    pub length: Option<usize>,
    /// Feature perturbation strength [default: 0.1].
    #[arg(long)]
    pub perturb: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `gen`.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Per-epoch loss CSV [default: <out>.loss.csv].
    #[arg(long, value_name = "FILE")]
    pub loss_csv: Option<PathBuf>,
    /// Seed for initialization and shuffling [default: 7].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs [default: 8].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Batch size [default: 16].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate [default: 5e-4].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning rate for the second half of training [default: 5e-5].
    #[arg(long)]
    pub lr_decayed: Option<f64>,
    /// SGD momentum [default: 0.9].
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Weight decay [default: 1e-5].
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// λ, weight of the step loss in L = Lm + λ·Ls [default: 1].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Sequence encoder [default: on].
    #[arg(long, value_enum)]
    pub encoder: Option<Switch>,
}

#[derive(Debug, Args, Default)]
pub struct AlignArgs {
    /// τ, start-point threshold on the mask map (or on S without it) [default: 0.3].
    #[arg(long)]
    pub tau: Option<f64>,
    /// σ, gap threshold on s·t during the walk [default: 0.1].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// γ, soft path-length weighting constant [default: 100].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Path weighting [default: soft].
    #[arg(long, value_parser = parse_weighting)]
    pub weighting: Option<Weighting>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Query features (.vsfq, or .csv with --fps).
    #[arg(long, value_name = "FILE", requires = "reference", conflicts_with = "data")]
    pub query: Option<PathBuf>,
    /// Reference features (.vsfq, or .csv with --fps).
    #[arg(long, value_name = "FILE", requires = "query")]
    pub reference: Option<PathBuf>,
    /// Frame rate of CSV inputs.
    #[arg(long)]
    pub fps: Option<f32>,
    /// Dataset directory; detects on every held-out and negative pair.
    #[arg(long, value_name = "DIR", required_unless_present = "query")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub align: AlignArgs,
    /// Alignment strategy [default: sm].
    #[arg(long)]
    pub aligner: Option<String>,
    /// Sequence encoder [default: on].
    #[arg(long, value_enum)]
    pub encoder: Option<Switch>,
    /// Mask map as temporal similarity; off sets t ≡ 1 [default: on].
    #[arg(long, value_enum)]
    pub mask_map: Option<Switch>,
    /// Detections JSON [default: stdout].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Detections JSON written by `detect`.
    #[arg(long, value_name = "FILE")]
    pub detections: PathBuf,
    /// Annotations JSON.
    #[arg(long, value_name = "FILE")]
    pub annotations: PathBuf,
    /// IoU threshold: 0, 0.3, 0.5 or 0.7.
    #[arg(long, default_value_t = 0.0)]
    pub iou: f64,
    /// Report JSON [default: stdout].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Precision/recall sweep CSV.
    #[arg(long, value_name = "FILE")]
    pub sweep_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Output directory for ablation.csv and sweep.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// IoU threshold of the parameter sweep.
    #[arg(long, default_value_t = 0.0)]
    pub sweep_iou: f64,
    #[command(flatten)]
    pub align: AlignArgs,
}

#[derive(Debug, Args)]
pub struct ExportMapsArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Query features (.vsfq, or .csv with --fps).
    #[arg(long, value_name = "FILE")]
    pub query: PathBuf,
    /// Reference features (.vsfq, or .csv with --fps).
    #[arg(long, value_name = "FILE")]
    pub reference: PathBuf,
    /// Frame rate of CSV inputs.
    #[arg(long)]
    pub fps: Option<f32>,
    /// Sequence encoder [default: on].
    #[arg(long, value_enum)]
    pub encoder: Option<Switch>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Seed of the random inputs.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        if e.is_numeric_error() {
            Failure::Numeric(msg)
        } else if matches!(e, Error::Config(_) | Error::UnknownAligner(_)) {
            Failure::Usage(msg)
        } else {
            Failure::Data(msg)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Gen(a) => commands::gen(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Detect(a) => commands::detect(cfg, a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate(cfg, a),
        Command::ExportMaps(a) => commands::export_maps(cfg, a),
        Command::GradCheck(a) => commands::grad_check(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
