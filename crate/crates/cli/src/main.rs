mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scribe_core::par::{available_workers, with_workers};
use scribe_core::{Exec, HeadKind, Result};

use commands::Ctx;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "scribe", version, about = "Compare segmentation heads under image corruptions")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value config file (`section.key = value`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.total_iters=100`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seed; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides `run.workers` (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run directory; defaults to `runs/<run.name>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset into `<run>/dataset`.
    Gen,
    /// Train one head on the train split.
    Train {
        #[arg(long)]
        head: HeadKind,
        /// Dataset directory; defaults to `<run>/dataset`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write every suite corruption of a directory of images.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Evaluate checkpoints on clean and corrupted validation images.
    Bench {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoints; defaults to `<run>/checkpoints/<head>.ckpt` for `train.heads`.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// Autocorrelation and explained-variance diagnostics.
    Analyze {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// gen, train, bench and analyze for every seed in `run.seeds`.
    Repro,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&cli.common.sets)?;
    if let Some(s) = cli.common.seed {
        cfg.set("run.seed", s);
    }
    if let Some(w) = cli.common.workers {
        cfg.set("run.workers", w);
    }
    let workers = match cfg.workers()? {
        0 => available_workers(),
        w => w,
    };
    let run_dir = cli
        .common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.raw("run.name")));
    let ctx = Ctx {
        cfg,
        run_dir,
        svg: cli.common.svg,
        exec: Exec::from_workers(workers),
    };
    with_workers(workers, || match &cli.command {
        Command::Gen => commands::gen(&ctx),
        Command::Train { head, data } => commands::train(&ctx, *head, data.as_deref()).map(|_| ()),
        Command::Corrupt { input, output } => commands::corrupt(&ctx, input, output),
        Command::Bench { data, checkpoints } => commands::bench(&ctx, data.as_deref(), checkpoints).map(|_| ()),
        Command::Analyze { data, checkpoints } => commands::analyze(&ctx, data.as_deref(), checkpoints).map(|_| ()),
        Command::Repro => commands::repro(&ctx),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
