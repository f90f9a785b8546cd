//! Library surface of the `retrofilter` command-line tool: config parsing,
//! pipeline drivers per subcommand, and CSV emission. The binary in
//! `main.rs` is a thin argument-parsing shell over these functions so the
//! integration tests can exercise them directly.

pub mod config;
pub mod report;

use std::path::Path;

use thiserror::Error;

use retrofilter::scenario::{
    compute_metrics, run_scenario, MetricsSummary, RunReport, ScenarioConfig, ScenarioError,
};

pub use config::{parse_config, preset, ConfigError};

/// Pipeline stages, used to name failures and derive exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Trajectory,
    Simulate,
    Track,
    Decorrelate,
    Refilter,
    Metrics,
    Io,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Trajectory => "trajectory",
            Stage::Simulate => "simulate",
            Stage::Track => "track",
            Stage::Decorrelate => "decorrelate",
            Stage::Refilter => "refilter",
            Stage::Metrics => "metrics",
            Stage::Io => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Trajectory => 3,
            Stage::Simulate => 4,
            Stage::Track => 5,
            Stage::Decorrelate => 6,
            Stage::Refilter => 7,
            Stage::Metrics => 8,
            Stage::Io => 9,
        }
    }
}

#[derive(Debug, Error)]
#[error("stage {stage}: {message}", stage = .stage.name())]
pub struct CliError {
    pub stage: Stage,
    pub message: String,
}

impl CliError {
    fn new(stage: Stage, message: impl ToString) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }
}

fn stage_of(err: &ScenarioError) -> Stage {
    match err {
        ScenarioError::Trajectory(_)
        | ScenarioError::DegenerateEndpoints
        | ScenarioError::ShootingDivergence { .. }
        | ScenarioError::SingularShootingJacobian => Stage::Trajectory,
        ScenarioError::Simulate(_) | ScenarioError::TooFewDetections { .. } => Stage::Simulate,
        ScenarioError::Track(_) => Stage::Track,
        ScenarioError::Decorrelate(_) => Stage::Decorrelate,
        ScenarioError::Refilter(_) => Stage::Refilter,
        ScenarioError::InvalidConfig { .. } | ScenarioError::Dynamics(_) => Stage::Config,
    }
}

fn run(cfg: &ScenarioConfig) -> Result<(RunReport, MetricsSummary), CliError> {
    let report = run_scenario(cfg).map_err(|e| CliError::new(stage_of(&e), e))?;
    let metrics = compute_metrics(&report, cfg.rms_window_start_s);
    Ok((report, metrics))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::new(Stage::Io, e)
}

/// Depth of the pipeline a subcommand runs and emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineDepth {
    Simulate,
    Track,
    Decorrelate,
    Refilter,
}

/// Runs the pipeline through `depth` only, writing the file subset for the
/// stages that actually ran. The full report and metrics are returned only
/// when the whole pipeline executed.
pub fn run_and_emit(
    cfg: &ScenarioConfig,
    depth: PipelineDepth,
    out_dir: &Path,
) -> Result<Option<(RunReport, MetricsSummary)>, CliError> {
    if depth == PipelineDepth::Refilter {
        let (report, metrics) = run(cfg)?;
        report::emit_report(&report, &metrics, out_dir).map_err(io_err)?;
        return Ok(Some((report, metrics)));
    }

    let scenario_err = |e: ScenarioError| CliError::new(stage_of(&e), e);
    std::fs::create_dir_all(out_dir).map_err(io_err)?;

    let full_truth = retrofilter::scenario::truth_trajectory(cfg).map_err(scenario_err)?;
    let detections =
        retrofilter::scenario::simulate_detections(cfg, &full_truth).map_err(scenario_err)?;
    report::write_truth_csv(&full_truth, out_dir).map_err(io_err)?;
    report::write_detections_csv(&detections, out_dir).map_err(io_err)?;
    if depth == PipelineDepth::Simulate {
        return Ok(None);
    }

    let source = retrofilter::scenario::track_source(cfg, &detections).map_err(scenario_err)?;
    report::write_source_csv(&source.estimates, out_dir).map_err(io_err)?;
    if depth == PipelineDepth::Track {
        return Ok(None);
    }

    let decorrelation =
        retrofilter::scenario::decorrelate_source(cfg, &source).map_err(scenario_err)?;
    report::write_ssem_csv(&decorrelation.ssems, out_dir).map_err(io_err)?;
    report::write_diagnostics_csv(&decorrelation.diagnostics, out_dir).map_err(io_err)?;
    Ok(None)
}

/// Per-seed Monte Carlo comparison row.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub seed: u64,
    pub rms_pos_source: f64,
    pub rms_pos_refiltered: f64,
    pub rms_vel_source: f64,
    pub rms_vel_refiltered: f64,
    pub nees_avg_source: f64,
    pub nees_avg_refiltered: f64,
    pub improved: bool,
}

/// Runs `runs` seeds starting at the config's seed, merged in seed order.
pub fn compare(
    cfg: &ScenarioConfig,
    runs: u64,
    out_dir: &Path,
) -> Result<Vec<CompareRow>, CliError> {
    let mut rows = Vec::with_capacity(runs as usize);
    for offset in 0..runs {
        let seeded = ScenarioConfig {
            seed: cfg.seed + offset,
            ..cfg.clone()
        };
        let (_, metrics) = run(&seeded)?;
        rows.push(CompareRow {
            seed: seeded.seed,
            rms_pos_source: metrics.source.rms_pos_m,
            rms_pos_refiltered: metrics.refiltered.rms_pos_m,
            rms_vel_source: metrics.source.rms_vel_mps,
            rms_vel_refiltered: metrics.refiltered.rms_vel_mps,
            nees_avg_source: metrics.source.nees_time_avg,
            nees_avg_refiltered: metrics.refiltered.nees_time_avg,
            improved: metrics.refiltered.rms_pos_m < metrics.source.rms_pos_m
                && metrics.refiltered.rms_vel_mps < metrics.source.rms_vel_mps,
        });
    }

    std::fs::create_dir_all(out_dir).map_err(io_err)?;
    let mut out = String::from(
        "seed,rms_pos_source,rms_pos_refiltered,rms_vel_source,rms_vel_refiltered,\
         nees_avg_source,nees_avg_refiltered,improved\n",
    );
    for row in &rows {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            row.seed,
            row.rms_pos_source,
            row.rms_pos_refiltered,
            row.rms_vel_source,
            row.rms_vel_refiltered,
            row.nees_avg_source,
            row.nees_avg_refiltered,
            u8::from(row.improved),
        ));
    }
    std::fs::write(out_dir.join("mc_summary.csv"), &out).map_err(io_err)?;

    let improved = rows.iter().filter(|r| r.improved).count();
    let summary = format!(
        "monte carlo comparison over {} seeds starting at {}\nrefiltered RMS lower in both position and velocity: {}/{}\n",
        runs,
        cfg.seed,
        improved,
        runs
    );
    std::fs::write(out_dir.join("summary.txt"), summary).map_err(io_err)?;
    Ok(rows)
}

/// Runs the preset matching a figure name and writes the full report plus
/// plot-ready curve files and a gnuplot script.
pub fn reproduce(
    figure: &str,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<(RunReport, MetricsSummary), CliError> {
    let preset_name = match figure {
        "fig2" => "paper_fig2",
        "fig3" => "paper_fig3",
        "fig4" => "paper_fig4",
        other => {
            return Err(CliError::new(
                Stage::Config,
                format!("unknown figure {other:?}; expected fig2, fig3, or fig4"),
            ))
        }
    };
    let mut cfg = preset(preset_name).expect("preset exists");
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let (report, metrics) = run(&cfg)?;
    report::emit_report(&report, &metrics, out_dir).map_err(io_err)?;
    report::write_figure_files(figure, &report, &metrics, out_dir).map_err(io_err)?;
    Ok((report, metrics))
}
