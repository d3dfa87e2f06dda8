use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::{error, info};
use mastersample_cli::{locate_resume, run_experiment, CliResult, ExperimentConfig, RunOptions};

/// Runs master-sample coverage experiments on synthetic identity worlds.
#[derive(Debug, Parser)]
#[command(name = "mastersample", version)]
struct Args {
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(short, long, conflicts_with = "resume")]
    config: Option<PathBuf>,

    /// Output directory; overrides `experiment.output_dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Root seed; overrides `experiment.root_seed`.
    #[arg(short, long, conflicts_with = "resume")]
    seed: Option<u64>,

    /// Continue an experiment from a run checkpoint or its output directory.
    #[arg(short, long, value_name = "CHECKPOINT")]
    resume: Option<PathBuf>,

    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, conflicts_with = "quiet")]
    verbose: u8,

    /// Only log errors.
    #[arg(short, long)]
    quiet: bool,

    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,

    /// Interrupt every run after this many generations.
    #[arg(long, hide = true)]
    halt_at: Option<usize>,
}

fn run(args: &Args) -> CliResult<()> {
    let (out_dir, config) = match &args.resume {
        Some(path) => {
            let (dir, config) = locate_resume(path)?;
            (args.out.clone().unwrap_or(dir), config)
        }
        None => {
            let mut config = match &args.config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(seed) = args.seed {
                config.experiment.root_seed = seed;
            }
            if let Some(out) = &args.out {
                config.experiment.output_dir = out.clone();
            }
            (config.experiment.output_dir.clone(), config)
        }
    };
    if args.print_config {
        config.validate()?;
        print!("{}", config.resolved().to_toml());
        return Ok(());
    }
    let summary = run_experiment(
        &config,
        &out_dir,
        RunOptions {
            halt_at: args.halt_at,
        },
    )?;
    info!("artifacts written to {}", out_dir.display());
    print!("{}", summary.to_table());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match (args.quiet, args.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("mastersample: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
