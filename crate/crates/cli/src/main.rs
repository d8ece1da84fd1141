//! `fgl`: synthesize data, train, run inference and evaluate.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fgl_core::bridge::MaskSource;

#[derive(Parser, Debug)]
#[command(
    name = "fgl",
    version,
    about = "Forgery localization, detection and explanation toolkit"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Model / run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for data generation and per-image evaluation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Run directory (config.json, log.txt, checkpoints/, outputs/).
    #[arg(long, global = true, env = "FGL_RUN_DIR")]
    pub run_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic forgery dataset with manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        forged: usize,
        #[arg(long, default_value_t = 8)]
        authentic: usize,
        /// Comma-separated subset of splicing,copy-move,removal.
        #[arg(long, value_delimiter = ',')]
        types: Vec<String>,
        /// Directory of source photos; procedural textures when absent.
        #[arg(long)]
        sources: Option<PathBuf>,
        /// Apply the training distortion policy.
        #[arg(long)]
        distort: bool,
    },
    /// Train the localization expert.
    TrainFlexpert {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train the mask bridge and decision head on top of an expert.
    TrainBridge {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        expert: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "predicted")]
        mask_source: MaskArg,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Predict a forgery score map for one image.
    Localize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Where to write the score map PNG.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Authentic / forged verdict for one image.
    Detect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Verdict plus textual explanation for one image.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Forgery type named in the explanation of a forged verdict.
        #[arg(long = "type")]
        forgery_type: Option<String>,
    },
    /// Pixel AUC / F1 of an expert over a manifest.
    EvalLoc {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Image-level accuracy of a bridge checkpoint.
    EvalDet {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "predicted")]
        mask_source: MaskArg,
    },
    /// ROUGE of rendered explanations against manifest captions.
    EvalExplain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Pixel AUC under each distortion of a ladder.
    SweepRobust {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// JSON list of distortions; the standard ladder when absent.
        #[arg(long)]
        ladder: Option<PathBuf>,
    },
    /// Train one expert per object-embedding length and compare F1.
    SweepM {
        #[arg(long)]
        manifest: PathBuf,
        /// Scored manifest; the training manifest when absent.
        #[arg(long)]
        eval_manifest: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "4,12,24")]
        m: Vec<usize>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Component ablations of the expert.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        eval_manifest: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[arg(long, value_enum, default_value = "all")]
        target: GradTarget,
    },
    /// Check a manifest against the dataset rules.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskArg {
    Predicted,
    GroundTruth,
}

impl From<MaskArg> for MaskSource {
    fn from(m: MaskArg) -> Self {
        match m {
            MaskArg::Predicted => MaskSource::Predicted,
            MaskArg::GroundTruth => MaskSource::GroundTruth,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradTarget {
    Expert,
    Bridge,
    All,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
