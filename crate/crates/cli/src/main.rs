//! `prosody-gs` command-line tool.
//!
//! Exit codes: 0 success, 1 partial failure (some inputs failed, others
//! succeeded), 2 input error (bad arguments, unreadable or malformed
//! files), 3 computation failure (no voicing, evaluation or training
//! failure, failed checks).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prosody_gs::analysis::AnalysisConfig;
use prosody_gs::pitch::PitchConfig;
use prosody_gs::FrameSpec;

#[derive(Parser, Debug)]
#[command(
    name = "prosody-gs",
    version,
    about = "Global-summary prosody features and prosody-transfer metrics"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Analysis sample rate; inputs at other rates are resampled.
    #[arg(long, global = true, default_value_t = 16_000)]
    pub sample_rate: u32,
    #[arg(long, global = true, default_value_t = 50.0)]
    pub window_ms: f64,
    #[arg(long, global = true, default_value_t = 12.5)]
    pub hop_ms: f64,
    #[arg(long, global = true, default_value_t = 80)]
    pub n_mels: usize,
    /// Frames with RMS below this amplitude are unvoiced.
    #[arg(long, global = true, default_value_t = 5e-3)]
    pub rms_threshold: f64,
    #[arg(long, global = true, default_value_t = 50.0)]
    pub f0_min: f64,
    #[arg(long, global = true, default_value_t = 400.0)]
    pub f0_max: f64,
}

impl GlobalArgs {
    pub fn analysis(&self) -> Result<AnalysisConfig, CliError> {
        let frame_spec = FrameSpec::from_ms(self.window_ms, self.hop_ms, self.sample_rate)?;
        let pitch = PitchConfig {
            f0_min_hz: self.f0_min,
            f0_max_hz: self.f0_max,
            voicing_rms_threshold: self.rms_threshold,
            ..Default::default()
        };
        pitch.validate(self.sample_rate)?;
        Ok(AnalysisConfig {
            sample_rate_hz: self.sample_rate,
            frame_spec,
            pitch,
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write log-F0 and RMS contour CSVs per input and a GS corpus CSV.
    Extract {
        /// WAV files or glob patterns.
        #[arg(required = true)]
        inputs: Vec<String>,
        #[arg(short, long)]
        out_dir: PathBuf,
        /// Also write the scaled log-mel spectrogram of each input.
        #[arg(long)]
        mel: bool,
    },
    /// Normalization statistics.
    Norm {
        #[command(subcommand)]
        command: NormCommand,
    },
    /// Compare a reference utterance with a candidate.
    Compare {
        reference: PathBuf,
        candidate: PathBuf,
        #[command(flatten)]
        stats: StatsSource,
        /// Write the metrics as JSON to this file.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo evaluation over a manifest of texts, references and candidates.
    McEval {
        manifest: PathBuf,
        #[command(flatten)]
        stats: StatsSource,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
        format: ReportFormat,
        /// Overrides the manifest's run count (default 50).
        #[arg(long)]
        n_runs: Option<usize>,
        /// Column name in the printed table.
        #[arg(long, default_value = "model")]
        label: String,
    },
    /// Print saved reports side by side as a metrics table.
    Table {
        /// `LABEL=PATH` of a JSON or CSV report, one per column.
        #[arg(required = true)]
        columns: Vec<String>,
        /// With exactly two reports (matched, then mismatched), also report
        /// how often the first scores lower on both cosine distances.
        #[arg(long)]
        discriminate: bool,
    },
    /// Project a GS corpus onto its top two principal components.
    Scatter {
        corpus: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// CSV `id,group` assigning corpus sources to plot groups.
        #[arg(long)]
        groups: Option<PathBuf>,
    },
    /// The toy conditioned text-to-mel model.
    Toy {
        #[command(subcommand)]
        command: ToyCommand,
    },
    /// Generate demonstration audio.
    Synth {
        #[command(subcommand)]
        command: SynthCommand,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct StatsSource {
    /// NormStats JSON.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Fit statistics on this GS corpus CSV instead.
    #[arg(long)]
    pub fit_corpus: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum NormCommand {
    /// Fit per-dimension mean and std over a GS corpus CSV.
    Fit {
        corpus: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub eval_every: usize,
    #[arg(long, value_enum, default_value_t = Optimizer::Adam)]
    pub optimizer: Optimizer,
    #[arg(long, default_value_t = 48)]
    pub n_texts: usize,
    #[arg(long, default_value_t = 8)]
    pub variants: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Subcommand, Debug)]
enum ToyCommand {
    /// Train on the synthetic corpus; writes checkpoint.json and loss.csv.
    Train {
        #[command(flatten)]
        toy: ToyArgs,
        #[arg(short, long)]
        out_dir: PathBuf,
        /// Replace the prosody input with a constant (ablation).
        #[arg(long)]
        unconditioned: bool,
    },
    /// Compare backpropagated and finite-difference gradients.
    Gradcheck {
        #[arg(long, default_value_t = 16)]
        width: usize,
        #[arg(long, default_value_t = 10)]
        examples: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Train with and without conditioning and report the validation MSE ratio.
    Ablate {
        #[command(flatten)]
        toy: ToyArgs,
        #[arg(long, default_value_t = 0.7)]
        max_ratio: f64,
    },
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    /// Two prosody families with matched and mismatched candidate manifests.
    Corpus {
        #[arg(short, long)]
        out_dir: PathBuf,
        /// References per family.
        #[arg(long, default_value_t = 6)]
        per_family: usize,
        #[arg(long, default_value_t = 4)]
        texts: usize,
    },
    /// A steady tone.
    Tone {
        #[arg(long)]
        freq: f64,
        #[arg(long, default_value_t = 1.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0.5)]
        amplitude: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Compute(String),
    Partial(String),
}

impl CliError {
    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Compute(m) | CliError::Partial(m) => m,
        }
    }
}

impl From<prosody_gs::Error> for CliError {
    fn from(e: prosody_gs::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Compute(e.to_string())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Extract {
            inputs,
            out_dir,
            mel,
        } => commands::extract(g, &inputs, &out_dir, mel),
        Command::Norm {
            command: NormCommand::Fit { corpus, out },
        } => commands::norm_fit(&corpus, &out),
        Command::Compare {
            reference,
            candidate,
            stats,
            out,
        } => commands::compare(g, &reference, &candidate, &stats, out.as_deref()),
        Command::McEval {
            manifest,
            stats,
            out,
            format,
            n_runs,
            label,
        } => commands::mc_eval(g, &manifest, &stats, &out, format, n_runs, &label),
        Command::Table {
            columns,
            discriminate,
        } => commands::table(&columns, discriminate),
        Command::Scatter {
            corpus,
            out,
            groups,
        } => commands::scatter(&corpus, &out, groups.as_deref()),
        Command::Toy { command } => match command {
            ToyCommand::Train {
                toy,
                out_dir,
                unconditioned,
            } => commands::toy_train(g, &toy, &out_dir, !unconditioned),
            ToyCommand::Gradcheck {
                width,
                examples,
                tolerance,
            } => commands::toy_gradcheck(g, width, examples, tolerance),
            ToyCommand::Ablate { toy, max_ratio } => commands::toy_ablate(g, &toy, max_ratio),
        },
        Command::Synth { command } => match command {
            SynthCommand::Corpus {
                out_dir,
                per_family,
                texts,
            } => commands::synth_corpus(g, &out_dir, per_family, texts),
            SynthCommand::Tone {
                freq,
                seconds,
                amplitude,
                out,
            } => commands::synth_tone(g, freq, seconds, amplitude, &out),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Partial(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
