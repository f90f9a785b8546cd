//! Strict TOML configuration schema and the shipped experiment presets.
//!
//! Unknown keys are errors; optional keys fall back to the documented
//! defaults (1 Hz measurement rate, seed 0, 60 s comparison window, default
//! eta search). `parse_config` also accepts a preset name (`paper_fig2`,
//! `paper_fig3`, `paper_fig4`) in place of a file path.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use retrofilter::procnoise::EtaOptions;
use retrofilter::scenario::{presets, EtaMode, ScenarioConfig};
use retrofilter::sensing::{GeodeticCoord, RadarConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeodeticFile {
    lat_deg: f64,
    lon_deg: f64,
    alt_m: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadarFile {
    bandwidth_hz: f64,
    beamwidth_rad: f64,
    error_slope: f64,
    ref_snr: f64,
    ref_range_m: f64,
    ref_rcs_sqm: f64,
    site: GeodeticFile,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EtaSearchFile {
    eta_init: Option<f64>,
    eta_max: Option<f64>,
    rel_tol: Option<f64>,
    tol_psd: Option<f64>,
    smoothing_window: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    launch: GeodeticFile,
    impact: GeodeticFile,
    radar: RadarFile,
    flight_time_s: f64,
    target_rcs_sqm: f64,
    source_eta: f64,
    refilter_eta: f64,
    eta_mode: EtaModeFile,
    meas_rate_hz: Option<f64>,
    seed: Option<u64>,
    rms_window_start_s: Option<f64>,
    eta_search: Option<EtaSearchFile>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EtaModeFile {
    Known,
    Estimated,
}

fn geodetic(g: &GeodeticFile) -> Result<GeodeticCoord, ConfigError> {
    GeodeticCoord::new(g.lat_deg, g.lon_deg, g.alt_m)
        .map_err(|e| ConfigError::Invalid(e.to_string()))
}

impl ConfigFile {
    fn into_scenario(self) -> Result<ScenarioConfig, ConfigError> {
        let mut eta_opts = EtaOptions::default();
        if let Some(search) = &self.eta_search {
            if let Some(v) = search.eta_init {
                eta_opts.eta_init = v;
            }
            if let Some(v) = search.eta_max {
                eta_opts.eta_max = v;
            }
            if let Some(v) = search.rel_tol {
                eta_opts.rel_tol = v;
            }
            if let Some(v) = search.tol_psd {
                eta_opts.tol_psd = v;
            }
            eta_opts.smoothing_window = search.smoothing_window;
        }
        let cfg = ScenarioConfig {
            launch: geodetic(&self.launch)?,
            impact: geodetic(&self.impact)?,
            flight_time_s: self.flight_time_s,
            radar: RadarConfig {
                bandwidth_hz: self.radar.bandwidth_hz,
                beamwidth_rad: self.radar.beamwidth_rad,
                error_slope: self.radar.error_slope,
                ref_snr: self.radar.ref_snr,
                ref_range_m: self.radar.ref_range_m,
                ref_rcs_sqm: self.radar.ref_rcs_sqm,
                site: geodetic(&self.radar.site)?,
            },
            target_rcs_sqm: self.target_rcs_sqm,
            meas_rate_hz: self.meas_rate_hz.unwrap_or(1.0),
            source_eta: self.source_eta,
            refilter_eta: self.refilter_eta,
            eta_mode: match self.eta_mode {
                EtaModeFile::Known => EtaMode::Known,
                EtaModeFile::Estimated => EtaMode::Estimated,
            },
            eta_opts,
            seed: self.seed.unwrap_or(0),
            rms_window_start_s: self.rms_window_start_s.unwrap_or(60.0),
        };
        cfg.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

/// Returns the preset for a recognized name, if any.
pub fn preset(name: &str) -> Option<ScenarioConfig> {
    match name {
        "paper_fig2" => Some(presets::paper_fig2()),
        "paper_fig3" => Some(presets::paper_fig3()),
        "paper_fig4" => Some(presets::paper_fig4()),
        _ => None,
    }
}

/// Parses a scenario from a preset name or a strict TOML file.
pub fn parse_config(path_or_preset: &str) -> Result<ScenarioConfig, ConfigError> {
    if let Some(cfg) = preset(path_or_preset) {
        return Ok(cfg);
    }
    let text =
        std::fs::read_to_string(Path::new(path_or_preset)).map_err(|source| ConfigError::Io {
            path: path_or_preset.to_string(),
            source,
        })?;
    let file: ConfigFile = toml::from_str(&text)?;
    file.into_scenario()
}
