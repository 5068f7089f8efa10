mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sharechain::features::FeatureKind;
use sharechain::simulator::Split;

#[derive(Parser, Debug)]
#[command(name = "sharechain", version)]
#[command(about = "Reconstruct the chain of platforms a JPEG was shared through")]
pub struct Cli {
    /// Cap on worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MetricArg {
    Lsr,
    Ier,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write procedural source images for the simulator
    SynthSources {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Share every source through every chain and write a labelled dataset
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        sources: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract feature descriptors for the images of a manifest
    Extract {
        /// Comma-separated subset of dct,meta,header
        #[arg(long, default_value = "dct,meta,header")]
        features: String,
        #[arg(long)]
        manifest: PathBuf,
        /// Only entries of this split (train, val, test)
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the cascade on train features and fuse on validation features
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Stop platform for informed mode, or `none`
        #[arg(long)]
        informed: Option<String>,
    },
    /// Print `<path>\t<chain>\t<rejected>` per image; `-` reads paths from stdin
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        informed: Option<String>,
        #[arg(required = true)]
        images: Vec<String>,
    },
    /// Per-step accuracy, rejection and confusion on labelled features
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use one descriptor's detectors without fusion
        #[arg(long)]
        single_feature: Option<FeatureKind>,
        #[arg(long)]
        informed: Option<String>,
        /// Directory for one confusion CSV per step
        #[arg(long)]
        confusion_dir: Option<PathBuf>,
    },
    /// Nearest-enemy separability of labelled features
    Separability {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum, default_value_t = MetricArg::Lsr)]
        metric: MetricArg,
        /// Z-score every dimension first
        #[arg(long)]
        standardize: bool,
        /// Descriptors to concatenate (default: all present)
        #[arg(long)]
        descriptors: Option<String>,
        #[arg(long, default_value = "FB,FL,TW")]
        platforms: String,
        #[arg(long)]
        out: PathBuf,
        /// Per-sample LSR as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
