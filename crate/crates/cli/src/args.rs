use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "vidstyle", version, about = "Temporally consistent video stylization")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    pub cfg: Option<PathBuf>,
    /// Override one key (repeatable), e.g. `--set seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic dataset with ground truth.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        num_scenes: usize,
        #[arg(long)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Train {
        #[command(subcommand)]
        stage: Stage,
    },
    /// Stylize a frame directory or every scene of a dataset.
    Stylize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        translator: PathBuf,
        #[arg(long, required_unless_present = "no_refiner")]
        refiner: Option<PathBuf>,
        /// Frame-by-frame translator output only.
        #[arg(long)]
        no_refiner: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score stylized output against its source.
    Eval {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scene directory (or dataset root) with ground truth.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Per-frame latency and parameter count of the deploy stack.
    Bench {
        #[arg(long)]
        translator: PathBuf,
        #[arg(long, required_unless_present = "no_refiner")]
        refiner: Option<PathBuf>,
        #[arg(long)]
        no_refiner: bool,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Subcommand, Debug)]
pub enum Stage {
    /// Generators, pseudo-pairs and the image translator.
    Stage1 {
        #[arg(long)]
        data: PathBuf,
        /// `oracle`, or a directory of style frames.
        #[arg(long, default_value = "oracle")]
        style: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// The temporal refiner on top of a frozen translator.
    Stage2 {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        translator: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}
