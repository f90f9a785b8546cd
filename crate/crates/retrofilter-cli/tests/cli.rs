//! End-to-end tests of the CLI surfaces: preset parsing, file schemas,
//! byte-level determinism, and the figure-reproduction properties.

use std::fs;

use retrofilter::scenario::CHI2_6_BAND_95;
use retrofilter_cli::{compare, parse_config, report, reproduce, run_and_emit, PipelineDepth};

#[test]
fn refilter_emits_full_file_set() {
    let cfg = parse_config("paper_fig2").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (report_data, metrics) = run_and_emit(&cfg, PipelineDepth::Refilter, dir.path())
        .unwrap()
        .unwrap();

    for name in [
        "truth.csv",
        "detections.csv",
        "source_track.csv",
        "ssem.csv",
        "refiltered.csv",
        "metrics.csv",
        "diagnostics.csv",
        "summary.txt",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }

    // Documented SSEM schema.
    let ssem = fs::read_to_string(dir.path().join("ssem.csv")).unwrap();
    let header = ssem.lines().next().unwrap();
    assert_eq!(header, "epoch,z_x,z_y,z_z,sigma_x,sigma_y,sigma_z,eta_used");

    // One metrics row per tracked epoch.
    let metrics_csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics_csv.lines().count() - 1, report_data.epochs_s.len());
    assert_eq!(metrics.epochs_s.len(), report_data.epochs_s.len());
}

#[test]
fn same_seed_reproduces_byte_identical_csvs() {
    let cfg = parse_config("paper_fig2").unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_and_emit(&cfg, PipelineDepth::Refilter, a.path()).unwrap();
    run_and_emit(&cfg, PipelineDepth::Refilter, b.path()).unwrap();
    for name in [
        "truth.csv",
        "detections.csv",
        "source_track.csv",
        "ssem.csv",
        "refiltered.csv",
        "metrics.csv",
        "diagnostics.csv",
        "summary.txt",
    ] {
        let left = fs::read(a.path().join(name)).unwrap();
        let right = fs::read(b.path().join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
    }
}

#[test]
fn pipeline_depths_emit_expected_subsets() {
    let cfg = parse_config("paper_fig2").unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_and_emit(&cfg, PipelineDepth::Simulate, dir.path()).unwrap();
    assert!(dir.path().join("truth.csv").exists());
    assert!(dir.path().join("detections.csv").exists());
    assert!(!dir.path().join("source_track.csv").exists());

    let dir = tempfile::tempdir().unwrap();
    run_and_emit(&cfg, PipelineDepth::Decorrelate, dir.path()).unwrap();
    assert!(dir.path().join("ssem.csv").exists());
    assert!(!dir.path().join("refiltered.csv").exists());
}

#[test]
fn reproduce_fig3_curves_agree_after_transient() {
    let dir = tempfile::tempdir().unwrap();
    let (_, metrics) = reproduce("fig3", None, dir.path()).unwrap();
    assert!(dir.path().join("fig3_position.csv").exists());
    assert!(dir.path().join("fig3_velocity.csv").exists());
    assert!(dir.path().join("fig3.gp").exists());

    // With the same noise model on both sides the error curves coincide:
    // the sup-norm distance between the curves, relative to the curve scale,
    // stays below 1e-3. (Pointwise ratios are meaningless where an error
    // curve dips through zero.)
    let curve_gap = |src: &[f64], refilt: &[f64]| -> f64 {
        let mut sup_gap: f64 = 0.0;
        let mut sup_src: f64 = 0.0;
        for (i, t) in metrics.epochs_s.iter().enumerate() {
            if *t < 60.0 {
                continue;
            }
            sup_gap = sup_gap.max((refilt[i] - src[i]).abs());
            sup_src = sup_src.max(src[i]);
        }
        sup_gap / sup_src
    };
    let pos_gap = curve_gap(&metrics.source.pos_err_m, &metrics.refiltered.pos_err_m);
    let vel_gap = curve_gap(&metrics.source.vel_err_mps, &metrics.refiltered.vel_err_mps);
    assert!(pos_gap <= 1e-3, "position error-curve gap {pos_gap}");
    assert!(vel_gap <= 1e-3, "velocity error-curve gap {vel_gap}");
}

#[test]
fn reproduce_fig4_improves_both_rms() {
    let dir = tempfile::tempdir().unwrap();
    let (_, metrics) = reproduce("fig4", None, dir.path()).unwrap();
    assert!(
        metrics.refiltered.rms_pos_m < metrics.source.rms_pos_m,
        "position RMS did not improve"
    );
    assert!(
        metrics.refiltered.rms_vel_mps < metrics.source.rms_vel_mps,
        "velocity RMS did not improve"
    );
    assert!(metrics.refiltered.nees_within_band);
}

#[test]
fn reproduce_fig2_ssem_within_4_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let (report_data, _) = reproduce("fig2", None, dir.path()).unwrap();
    assert!(dir.path().join("fig2_ssem.csv").exists());
    assert!(dir.path().join("fig2.gp").exists());

    let mut total = 0usize;
    let mut within = 0usize;
    for (i, ssem) in report_data.ssems.iter().enumerate() {
        let Some(ssem) = ssem else { continue };
        for c in 0..3 {
            total += 1;
            let sigma = ssem.noise_cov.matrix()[(c, c)].sqrt();
            if (ssem.z[c] - report_data.truth[i][c]).abs() <= 4.0 * sigma {
                within += 1;
            }
        }
    }
    assert!(
        within as f64 / total as f64 >= 0.95,
        "{within}/{total} within 4 sigma"
    );
}

#[test]
fn reproduce_rejects_unknown_figure() {
    let dir = tempfile::tempdir().unwrap();
    let err = reproduce("fig9", None, dir.path()).unwrap_err();
    assert_eq!(err.stage.name(), "config");
}

#[test]
fn compare_rows_are_seed_ordered_and_deterministic() {
    let cfg = parse_config("paper_fig4").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rows = compare(&cfg, 3, dir.path()).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(
        rows.iter().map(|r| r.seed).collect::<Vec<_>>(),
        vec![0, 1, 2]
    );
    assert!(dir.path().join("mc_summary.csv").exists());
    assert!(dir.path().join("summary.txt").exists());

    let again = compare(&cfg, 3, tempfile::tempdir().unwrap().path()).unwrap();
    assert_eq!(rows, again);
}

#[test]
fn prefix_stages_match_full_pipeline() {
    // The per-stage drivers behind simulate/track/decorrelate must produce
    // exactly what the full run records.
    let cfg = parse_config("paper_fig2").unwrap();
    let full = retrofilter::scenario::run_scenario(&cfg).unwrap();

    let truth = retrofilter::scenario::truth_trajectory(&cfg).unwrap();
    assert_eq!(truth, full.full_truth);
    let detections = retrofilter::scenario::simulate_detections(&cfg, &truth).unwrap();
    assert_eq!(detections, full.detections);
    let source = retrofilter::scenario::track_source(&cfg, &detections).unwrap();
    assert_eq!(source.estimates, full.source);
}

#[test]
fn binary_simulate_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_retrofilter"))
        .args(["simulate", "--config", "paper_fig2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(dir.path().join("truth.csv").exists());
    assert!(dir.path().join("detections.csv").exists());
    assert!(!dir.path().join("source_track.csv").exists());
}

#[test]
fn binary_names_failing_stage_with_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_retrofilter"))
        .args(["refilter", "--config", "/no/such/config.toml", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("stage config"), "stderr: {stderr}");
}

#[test]
fn summary_reports_nees_verdict() {
    let cfg = parse_config("paper_fig4").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (_, metrics) = run_and_emit(&cfg, PipelineDepth::Refilter, dir.path())
        .unwrap()
        .unwrap();
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("within band") || summary.contains("OUTSIDE BAND"));
    assert!(metrics.chi2_band == CHI2_6_BAND_95);
    let _ = report::write_summary(&metrics, dir.path());
}
