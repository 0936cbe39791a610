use std::path::PathBuf;
use std::process::ExitCode;

use bold_ts::cli::{cmd_eval, cmd_extract, cmd_ribbon, cmd_synth, cmd_train_cls, cmd_train_seg, cmd_tsne, RunConfig};
use bold_ts::{Error, PadMode, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "boldts", version, about = "Synthetic BOLD pipeline: simulate, extract, train, evaluate")]
struct Cli {
    /// Strict JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config file
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-exact runs
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate trial volumes, schedules and ground truth
    Synth,
    /// Detect active voxels and write whole-trial series and class segments
    Extract {
        /// Directory written by `synth`
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        /// JSON object mapping "x,y,z" to an ROI tag
        #[arg(long)]
        roi_map: Option<PathBuf>,
    },
    /// Cross-validate the segment classifier
    TrainCls {
        /// segments.jsonl or the directory holding it
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        pad_mode: Option<PadMode>,
    },
    /// Train the whole-series segmenter and predict held-out trials
    TrainSeg {
        /// trials.jsonl or the directory holding it
        #[arg(long)]
        input: PathBuf,
    },
    /// Accuracy, confusion and Dice for segmentation predictions
    Eval {
        /// predictions.jsonl or the directory holding it
        #[arg(long)]
        input: PathBuf,
    },
    /// Embed captured activations with t-SNE and plot them
    Tsne {
        /// activations_fold0.jsonl or the directory holding it
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        layer: Option<String>,
    },
    /// Draw truth/prediction ribbons
    Ribbon {
        /// predictions.jsonl or the directory holding it
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::BadConfig(e.to_string()))?;
    }
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(base.seed);
    let mut cfg = base.with_seed(seed);
    let out = &cli.out;
    match cli.command {
        Command::Synth => cmd_synth(&cfg, out),
        Command::Extract {
            input,
            threshold,
            roi_map,
        } => {
            if let Some(t) = threshold {
                cfg.extract.threshold = t;
            }
            cmd_extract(&cfg, &input, roi_map.as_deref(), out)
        }
        Command::TrainCls { input, pad_mode } => {
            if let Some(m) = pad_mode {
                cfg.train.pad_mode = m;
            }
            cmd_train_cls(&cfg, &input, out)
        }
        Command::TrainSeg { input } => cmd_train_seg(&cfg, &input, out),
        Command::Eval { input } => cmd_eval(&input, out),
        Command::Tsne { input, layer } => cmd_tsne(&cfg, &input, layer.as_deref(), out),
        Command::Ribbon { input, limit } => cmd_ribbon(&input, limit, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
