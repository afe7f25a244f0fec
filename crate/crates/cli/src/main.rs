use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use salstruct_cli::commands::{cmd_eval, cmd_explain, cmd_preprocess, cmd_stats, cmd_synth, cmd_train};
use salstruct_cli::config::{parse_architecture, RunConfig};
use salstruct_cli::CliError;
use salstruct_core::dataset::{QualityLabel, Split};
use salstruct_core::fov::FovPolicy;

#[derive(Parser)]
#[command(name = "salstruct", version, about = "Retinal image quality grading with salient-structure priors")]
struct Cli {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Square training resolution in pixels.
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// TOML file of `key = value` settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    fov_fallback: Option<FallbackArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FallbackArg {
    Error,
    FullFrame,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Detect the FoV and salient structures and write rgb_ls / rgb_ts / rgb_ls_ts stacks.
    Preprocess { input: PathBuf, output: PathBuf },
    /// Render a synthetic labelled corpus with ground truth and a manifest.
    Synth {
        #[arg(long, default_value_t = 100)]
        n: usize,
        output: PathBuf,
    },
    /// Train on the manifest's train split; writes model.siqa and loss_curve.csv.
    Train {
        manifest: PathBuf,
        stacks: PathBuf,
        output: PathBuf,
        /// single or dual
        #[arg(long)]
        architecture: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Score a checkpoint on a split and write metrics, confusion and mask-size reports.
    Eval {
        checkpoint: PathBuf,
        manifest: PathBuf,
        stacks: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Grad-CAM heatmaps for an image or an rgb_ls_ts stack.
    Explain {
        checkpoint: PathBuf,
        input: PathBuf,
        output: PathBuf,
        /// Good, Usable or Reject; defaults to the predicted grade.
        #[arg(long)]
        class: Option<String>,
    },
    /// Per-grade |M_TS| distribution from a manifest and a preprocessing log.
    Stats {
        manifest: PathBuf,
        log: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
    },
}

fn parse_class(s: &str) -> Result<QualityLabel, CliError> {
    QualityLabel::ALL
        .into_iter()
        .find(|c| c.name().eq_ignore_ascii_case(s) || c.index().to_string() == s)
        .ok_or_else(|| CliError::Usage(format!("unknown class {s:?}")))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        cfg.apply(&RunConfig::load(p)?)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.resolution {
        cfg.resolution = r;
    }
    if let Some(f) = cli.fov_fallback {
        cfg.fov_fallback = match f {
            FallbackArg::Error => FovPolicy::Error,
            FallbackArg::FullFrame => FovPolicy::FullFrame,
        };
    }
    match cli.command {
        Command::Preprocess { input, output } => cmd_preprocess(&input, &output, &cfg),
        Command::Synth { n, output } => cmd_synth(n, &output, &cfg),
        Command::Train {
            manifest,
            stacks,
            output,
            architecture,
            epochs,
            batch_size,
        } => {
            if let Some(a) = architecture {
                cfg.architecture = parse_architecture(&a)?;
            }
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
            cmd_train(&manifest, &stacks, &output, &cfg)
        }
        Command::Eval {
            checkpoint,
            manifest,
            stacks,
            output,
            split,
        } => {
            let split = split
                .split()
                .ok_or_else(|| CliError::Usage("eval needs --split train or test".into()))?;
            cmd_eval(&checkpoint, &manifest, &stacks, &output, split)
        }
        Command::Explain {
            checkpoint,
            input,
            output,
            class,
        } => {
            let class = class.as_deref().map(parse_class).transpose()?;
            cmd_explain(&checkpoint, &input, class, &output, &cfg)
        }
        Command::Stats {
            manifest,
            log,
            output,
            split,
        } => cmd_stats(&manifest, &log, &output, split.split()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("salstruct: {e}");
            ExitCode::from(2)
        }
    }
}
