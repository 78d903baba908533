//! `metr` — batch driver for ring-watermark experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod report;

use error::CliResult;

#[derive(Parser)]
#[command(
    name = "metr",
    about = "Embed, attack, detect, and evaluate ring watermarks in diffusion latents",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct IoArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory holding a previous run's tensors and manifest.
    #[arg(long)]
    inputs: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate watermarked noise/image pairs plus a pairing manifest.
    Gen(CommonArgs),
    /// Apply the configured attack to previously generated images.
    Attack(IoArgs),
    /// Detect and decode the watermark in generated or attacked images.
    Detect(IoArgs),
    /// Run the attack grid and emit the metric reports.
    Eval(CommonArgs),
    /// Search the message scaler against the acceptance criterion.
    Tune(CommonArgs),
}

fn init_thread_pool() {
    if let Ok(value) = std::env::var("METR_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

fn run() -> CliResult<()> {
    init_thread_pool();
    let cli = Cli::parse();
    match cli.command {
        Command::Gen(args) => {
            let cfg = config::load(&args.config, args.seed)?;
            let out = commands::resolve_out(&cfg, args.out)?;
            commands::cmd_gen(&cfg, &out)
        }
        Command::Attack(args) => {
            let cfg = config::load(&args.common.config, args.common.seed)?;
            let out = commands::resolve_out(&cfg, args.common.out)?;
            commands::cmd_attack(&cfg, &args.inputs, &out)
        }
        Command::Detect(args) => {
            let cfg = config::load(&args.common.config, args.common.seed)?;
            let out = commands::resolve_out(&cfg, args.common.out)?;
            commands::cmd_detect(&cfg, &args.inputs, &out)
        }
        Command::Eval(args) => {
            let cfg = config::load(&args.config, args.seed)?;
            let out = commands::resolve_out(&cfg, args.out)?;
            commands::cmd_eval(&cfg, &out)
        }
        Command::Tune(args) => {
            let cfg = config::load(&args.config, args.seed)?;
            let out = commands::resolve_out(&cfg, args.out)?;
            commands::cmd_tune(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
