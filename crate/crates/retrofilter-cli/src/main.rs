use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use retrofilter_cli::{
    compare, parse_config, reproduce, run_and_emit, CliError, PipelineDepth, Stage,
};

/// Reconstructs independent state-space measurements from track histories,
/// estimates process noise conservatively, and refilters.
#[derive(Parser)]
#[command(name = "retrofilter", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario config: a TOML file path or a preset name
    /// (paper_fig2, paper_fig3, paper_fig4).
    #[arg(long)]
    config: String,
    /// Output directory for CSV files.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's random seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the truth trajectory and simulate radar detections.
    Simulate(RunArgs),
    /// Simulate, then run the source filter over the detections.
    Track(RunArgs),
    /// Track, then reconstruct the equivalent measurement sequence.
    Decorrelate(RunArgs),
    /// Full pipeline: decorrelate and refilter, with metrics and summary.
    Refilter(RunArgs),
    /// Monte Carlo seed sweep comparing source and refiltered accuracy.
    Compare {
        #[command(flatten)]
        args: RunArgs,
        /// Number of consecutive seeds to run.
        #[arg(long, default_value_t = 50)]
        runs: u64,
    },
    /// Run a shipped figure preset and emit plot-ready curves.
    Reproduce {
        /// Figure to reproduce: fig2, fig3, or fig4.
        #[arg(long)]
        figure: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the preset's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(args: &RunArgs) -> Result<retrofilter::scenario::ScenarioConfig, CliError> {
    let mut cfg = parse_config(&args.config).map_err(|e| CliError {
        stage: Stage::Config,
        message: e.to_string(),
    })?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load(&args)?;
            run_and_emit(&cfg, PipelineDepth::Simulate, &args.out)?;
        }
        Command::Track(args) => {
            let cfg = load(&args)?;
            run_and_emit(&cfg, PipelineDepth::Track, &args.out)?;
        }
        Command::Decorrelate(args) => {
            let cfg = load(&args)?;
            run_and_emit(&cfg, PipelineDepth::Decorrelate, &args.out)?;
        }
        Command::Refilter(args) => {
            let cfg = load(&args)?;
            let (_, metrics) = run_and_emit(&cfg, PipelineDepth::Refilter, &args.out)?
                .expect("full pipeline returns a report");
            println!(
                "rms position: source {:.3} m, refiltered {:.3} m",
                metrics.source.rms_pos_m, metrics.refiltered.rms_pos_m
            );
            println!(
                "rms velocity: source {:.3} m/s, refiltered {:.3} m/s",
                metrics.source.rms_vel_mps, metrics.refiltered.rms_vel_mps
            );
        }
        Command::Compare { args, runs } => {
            let cfg = load(&args)?;
            let rows = compare(&cfg, runs, &args.out)?;
            let improved = rows.iter().filter(|r| r.improved).count();
            println!("refiltered improved {improved}/{} seeds", rows.len());
        }
        Command::Reproduce { figure, out, seed } => {
            let (_, metrics) = reproduce(&figure, seed, &out)?;
            println!(
                "{figure}: rms position source {:.3} m vs refiltered {:.3} m; files in {}",
                metrics.source.rms_pos_m,
                metrics.refiltered.rms_pos_m,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error in stage {}: {}", err.stage.name(), err.message);
            ExitCode::from(err.stage.exit_code() as u8)
        }
    }
}
