//! CSV and summary emission.
//!
//! All CSVs carry a header row, the epoch as the first column, and values
//! printed with 17 significant digits so reruns with the same seed are
//! byte-identical and round-trip through f64 exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use retrofilter::dynamics::StateVector;
use retrofilter::ekf::GaussianEstimate;
use retrofilter::scenario::{MetricsSummary, RunReport};
use retrofilter::sensing::RuvMeasurement;
use retrofilter::ssem::{Ssem, StepDiagnostics};

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<()> {
    fs::write(dir.join(name), contents)
}

pub fn write_truth_csv(truth: &[(f64, StateVector)], dir: &Path) -> io::Result<()> {
    let mut out = String::from("epoch,x,y,z,vx,vy,vz\n");
    for (epoch, state) in truth {
        let cols: Vec<String> = state.iter().map(|v| num(*v)).collect();
        let _ = writeln!(out, "{},{}", num(*epoch), cols.join(","));
    }
    write_file(dir, "truth.csv", &out)
}

pub fn write_detections_csv(detections: &[RuvMeasurement], dir: &Path) -> io::Result<()> {
    let mut out = String::from("epoch,range_m,u,v,sigma_r,sigma_u,sigma_v\n");
    for det in detections {
        let r = det.noise_cov.matrix();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(det.epoch_s),
            num(det.z.x),
            num(det.z.y),
            num(det.z.z),
            num(r[(0, 0)].sqrt()),
            num(r[(1, 1)].sqrt()),
            num(r[(2, 2)].sqrt()),
        );
    }
    write_file(dir, "detections.csv", &out)
}

fn track_csv(estimates: &[GaussianEstimate]) -> String {
    let mut out =
        String::from("epoch,x,y,z,vx,vy,vz,sigma_x,sigma_y,sigma_z,sigma_vx,sigma_vy,sigma_vz\n");
    for est in estimates {
        let mut cols = vec![num(est.epoch_s)];
        cols.extend(est.mean.iter().map(|v| num(*v)));
        for i in 0..6 {
            cols.push(num(est.cov.matrix()[(i, i)].max(0.0).sqrt()));
        }
        let _ = writeln!(out, "{}", cols.join(","));
    }
    out
}

pub fn write_source_csv(estimates: &[GaussianEstimate], dir: &Path) -> io::Result<()> {
    write_file(dir, "source_track.csv", &track_csv(estimates))
}

pub fn write_refiltered_csv(estimates: &[GaussianEstimate], dir: &Path) -> io::Result<()> {
    write_file(dir, "refiltered.csv", &track_csv(estimates))
}

pub fn write_ssem_csv<'a>(ssems: impl IntoIterator<Item = &'a Ssem>, dir: &Path) -> io::Result<()> {
    let mut out = String::from("epoch,z_x,z_y,z_z,sigma_x,sigma_y,sigma_z,eta_used\n");
    for ssem in ssems {
        let r = ssem.noise_cov.matrix();
        let mut cols = vec![num(ssem.epoch_s)];
        cols.extend(ssem.z.iter().map(|v| num(*v)));
        for i in 0..ssem.z.len() {
            cols.push(num(r[(i, i)].sqrt()));
        }
        cols.push(num(ssem.eta_used));
        let _ = writeln!(out, "{}", cols.join(","));
    }
    write_file(dir, "ssem.csv", &out)
}

pub fn write_diagnostics_csv<'a>(
    diagnostics: impl IntoIterator<Item = &'a StepDiagnostics>,
    dir: &Path,
) -> io::Result<()> {
    let mut out = String::from(
        "epoch,eta_used,eta_iterations,min_eig_info_gain,off_block_residual,gain_tail_residual\n",
    );
    for diag in diagnostics {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(diag.epoch_s),
            num(diag.eta_used),
            diag.eta_iterations,
            num(diag.min_eig_info_gain),
            num(diag.off_block_residual),
            num(diag.gain_tail_residual),
        );
    }
    write_file(dir, "diagnostics.csv", &out)
}

pub fn write_metrics_csv(metrics: &MetricsSummary, dir: &Path) -> io::Result<()> {
    let mut out = String::from(
        "epoch,pos_err_source,pos_sigma_source,vel_err_source,vel_sigma_source,\
         pos_err_refiltered,pos_sigma_refiltered,vel_err_refiltered,vel_sigma_refiltered,\
         nees_source,nees_refiltered\n",
    );
    for (i, epoch) in metrics.epochs_s.iter().enumerate() {
        let cols = [
            num(*epoch),
            num(metrics.source.pos_err_m[i]),
            num(metrics.source.pos_sigma_m[i]),
            num(metrics.source.vel_err_mps[i]),
            num(metrics.source.vel_sigma_mps[i]),
            num(metrics.refiltered.pos_err_m[i]),
            num(metrics.refiltered.pos_sigma_m[i]),
            num(metrics.refiltered.vel_err_mps[i]),
            num(metrics.refiltered.vel_sigma_mps[i]),
            num(metrics.source.nees[i]),
            num(metrics.refiltered.nees[i]),
        ];
        let _ = writeln!(out, "{}", cols.join(","));
    }
    write_file(dir, "metrics.csv", &out)
}

pub fn write_summary(metrics: &MetricsSummary, dir: &Path) -> io::Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "comparison window: [{:.1}, {:.1}] s",
        metrics.window.0, metrics.window.1
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<14} {:>16} {:>16}", "RMS", "source", "refiltered");
    let _ = writeln!(
        out,
        "{:<14} {:>16.4} {:>16.4}",
        "position [m]", metrics.source.rms_pos_m, metrics.refiltered.rms_pos_m
    );
    let _ = writeln!(
        out,
        "{:<14} {:>16.4} {:>16.4}",
        "velocity [m/s]", metrics.source.rms_vel_mps, metrics.refiltered.rms_vel_mps
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "time-averaged NEES (6 dof, 95% chi-square band [{:.4}, {:.4}]):",
        metrics.chi2_band.0, metrics.chi2_band.1
    );
    for (name, track) in [
        ("source", &metrics.source),
        ("refiltered", &metrics.refiltered),
    ] {
        let _ = writeln!(
            out,
            "  {:<10} {:10.4}  {}",
            name,
            track.nees_time_avg,
            if track.nees_within_band {
                "within band"
            } else {
                "OUTSIDE BAND"
            }
        );
    }
    write_file(dir, "summary.txt", &out)
}

/// Writes the full report file set: truth, detections, source track, SSEM
/// stream, refiltered track, per-epoch metrics, diagnostics, and the summary.
pub fn emit_report(report: &RunReport, metrics: &MetricsSummary, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_truth_csv(&report.full_truth, dir)?;
    write_detections_csv(&report.detections, dir)?;
    write_source_csv(&report.source, dir)?;
    write_ssem_csv(report.ssems.iter().flatten(), dir)?;
    write_refiltered_csv(&report.refiltered, dir)?;
    write_metrics_csv(metrics, dir)?;
    write_diagnostics_csv(report.diagnostics.iter().flatten(), dir)?;
    write_summary(metrics, dir)
}

/// Plot-ready error/1σ curve pairs and a gnuplot script for a figure
/// reproduction.
pub fn write_figure_files(
    figure: &str,
    report: &RunReport,
    metrics: &MetricsSummary,
    dir: &Path,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    match figure {
        "fig2" => {
            let mut out = String::from("epoch,ssem_x,truth_x,sigma_x\n");
            for (i, ssem) in report.ssems.iter().enumerate() {
                let Some(ssem) = ssem else { continue };
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    num(ssem.epoch_s),
                    num(ssem.z[0]),
                    num(report.truth[i][0]),
                    num(ssem.noise_cov.matrix()[(0, 0)].sqrt()),
                );
            }
            write_file(dir, "fig2_ssem.csv", &out)?;
            let script = "\
set datafile separator ','
set key autotitle columnhead
set xlabel 'time [s]'
set ylabel 'x position [m]'
plot 'fig2_ssem.csv' using 1:2 with points title 'SSEM x', \\
     'fig2_ssem.csv' using 1:3 with lines title 'truth x'
pause -1
";
            write_file(dir, "fig2.gp", script)
        }
        _ => {
            let mut pos =
                String::from("epoch,source_err,source_sigma,refiltered_err,refiltered_sigma\n");
            let mut vel = pos.clone();
            for (i, epoch) in metrics.epochs_s.iter().enumerate() {
                let _ = writeln!(
                    pos,
                    "{},{},{},{},{}",
                    num(*epoch),
                    num(metrics.source.pos_err_m[i]),
                    num(metrics.source.pos_sigma_m[i]),
                    num(metrics.refiltered.pos_err_m[i]),
                    num(metrics.refiltered.pos_sigma_m[i]),
                );
                let _ = writeln!(
                    vel,
                    "{},{},{},{},{}",
                    num(*epoch),
                    num(metrics.source.vel_err_mps[i]),
                    num(metrics.source.vel_sigma_mps[i]),
                    num(metrics.refiltered.vel_err_mps[i]),
                    num(metrics.refiltered.vel_sigma_mps[i]),
                );
            }
            write_file(dir, &format!("{figure}_position.csv"), &pos)?;
            write_file(dir, &format!("{figure}_velocity.csv"), &vel)?;
            let script = format!(
                "\
set datafile separator ','
set key autotitle columnhead
set xlabel 'time [s]'
set logscale y
set ylabel 'position error [m]'
plot '{figure}_position.csv' using 1:2 with lines lw 2 title 'source error', \\
     '{figure}_position.csv' using 1:3 with lines dt 2 title 'source 1-sigma', \\
     '{figure}_position.csv' using 1:4 with lines lw 2 title 'refiltered error', \\
     '{figure}_position.csv' using 1:5 with lines dt 2 title 'refiltered 1-sigma'
pause -1
set ylabel 'velocity error [m/s]'
plot '{figure}_velocity.csv' using 1:2 with lines lw 2 title 'source error', \\
     '{figure}_velocity.csv' using 1:3 with lines dt 2 title 'source 1-sigma', \\
     '{figure}_velocity.csv' using 1:4 with lines lw 2 title 'refiltered error', \\
     '{figure}_velocity.csv' using 1:5 with lines dt 2 title 'refiltered 1-sigma'
pause -1
"
            );
            write_file(dir, &format!("{figure}.gp"), &script)
        }
    }
}
