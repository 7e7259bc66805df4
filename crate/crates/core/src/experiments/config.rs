//! TOML scenario files.
//!
//! Every key is optional; omitted values fall back to the full-scale
//! scenario defaults (the `paper` preset). Powers accept either a bare
//! number in watts or a string with an explicit unit: `"30 dBm"`, `"1 W"`,
//! `"250 mW"`. Angles in the file are degrees; internally everything is
//! radians.
//!
//! ```toml
//! [system]
//! n_bs = 12
//! pilot_power = "1 W"
//! pnr_db = 15.0
//!
//! [estimation]
//! rank_g = 3
//!
//! [sweep]
//! architecture = "he-irs"
//! variable = "t_tra"
//! grid = [60, 120, 180, 240, 300]
//! trials = 50
//! ```

use serde::Deserialize;

use crate::channel::SystemConfig;
use crate::error::{Error, Result};
use crate::estimation::{EstimationOptions, RegWeights};
use crate::manifold::CgOptions;

use super::{
    Architecture, ExperimentSpec, PowerModel, StePhaseMode, SweepVariable,
};

/// A power value: watts directly, or a string with a unit suffix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PowerValue {
    Watts(f64),
    Text(String),
}

impl PowerValue {
    pub fn watts(&self) -> Result<f64> {
        match self {
            PowerValue::Watts(w) => Ok(*w),
            PowerValue::Text(s) => parse_power(s),
        }
    }
}

fn parse_power(s: &str) -> Result<f64> {
    let t = s.trim();
    let (num, unit) = t
        .find(|c: char| c.is_ascii_alphabetic())
        .map(|i| t.split_at(i))
        .ok_or_else(|| Error::Config(format!("power {t:?} has no unit suffix")))?;
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad power value in {t:?}")))?;
    match unit.trim().to_ascii_lowercase().as_str() {
        "dbm" => Ok(super::dbm_to_watt(value)),
        "w" => Ok(value),
        "mw" => Ok(value * 1e-3),
        other => Err(Error::Config(format!("unknown power unit {other:?}"))),
    }
}

fn deg(x: f64) -> f64 {
    x * std::f64::consts::PI / 180.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    system: RawSystem,
    #[serde(default)]
    estimation: RawEstimation,
    #[serde(default)]
    beamforming: RawBeamforming,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    power: RawPower,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    preset: Option<String>,
    n_bs: Option<usize>,
    n_ue: Option<usize>,
    users: Option<usize>,
    n_y: Option<usize>,
    n_z: Option<usize>,
    n_dte_y: Option<usize>,
    paths_g: Option<usize>,
    paths_h: Option<usize>,
    wavelength_m: Option<f64>,
    spacing_m: Option<f64>,
    dte_bits: Option<u32>,
    pilot_power: Option<PowerValue>,
    bs_power: Option<PowerValue>,
    noise_power: Option<PowerValue>,
    downlink_noise_power: Option<PowerValue>,
    pnr_db: Option<f64>,
    snr_db: Option<f64>,
    t_total: Option<usize>,
    dist_bs_irs_m: Option<f64>,
    dist_irs_ue_m: Option<f64>,
    ue_area_azimuth_deg: Option<[f64; 2]>,
    ue_area_elevation_deg: Option<[f64; 2]>,
    los_bs_deg: Option<f64>,
    los_irs_azimuth_deg: Option<f64>,
    los_irs_elevation_deg: Option<f64>,
    nlos_gain_ratio: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimation {
    rank_g: Option<usize>,
    rank_h: Option<usize>,
    weight_scale: Option<f64>,
    weight_scale_ste: Option<f64>,
    /// Explicit `[g, h, row, col]` weights; overrides auto-balancing.
    weights: Option<[f64; 4]>,
    inner_tol: Option<f64>,
    inner_max: Option<usize>,
    outer_tol: Option<f64>,
    outer_max: Option<usize>,
    cg_max_iters: Option<usize>,
    cg_grad_tol: Option<f64>,
    cg_rel_cost_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeamforming {
    streams: Option<usize>,
    wmmse_max_iters: Option<usize>,
    wmmse_rel_tol: Option<f64>,
    wbs_restarts: Option<usize>,
    wbs_cg_max_iters: Option<usize>,
    ste_phase_mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    architecture: Option<String>,
    variable: Option<String>,
    grid: Option<Vec<f64>>,
    trials: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    t_tra: Option<usize>,
    pnr_snr_offset_db: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    p_static: Option<PowerValue>,
    p_pin: Option<PowerValue>,
    p_bs_cir: Option<PowerValue>,
    p_ue_cir: Option<PowerValue>,
}

/// Alias kept for discoverability; a parsed run configuration IS the
/// experiment spec.
pub type RunConfig = ExperimentSpec;

/// Parse a scenario TOML string into an experiment spec.
pub fn parse_run_config(text: &str) -> Result<ExperimentSpec> {
    let raw: RawFile = toml::from_str(text)?;

    if let Some(p) = raw.system.preset.as_deref() {
        if p != "paper" && p != "custom" {
            return Err(Error::Config(format!("unknown preset {p:?}")));
        }
    }
    let mut cfg = SystemConfig::paper();
    let s = &raw.system;
    if let Some(v) = s.n_bs {
        cfg.n_bs = v;
    }
    if let Some(v) = s.n_ue {
        cfg.n_ue = v;
    }
    if let Some(v) = s.users {
        cfg.users = v;
    }
    if let Some(v) = s.n_y {
        cfg.n_y = v;
        // Keep the half/half split unless overridden below.
        cfg.n_dte_y = v / 2;
        cfg.n_ste_y = v - v / 2;
    }
    if let Some(v) = s.n_z {
        cfg.n_z = v;
    }
    if let Some(v) = s.n_dte_y {
        cfg.n_dte_y = v;
        cfg.n_ste_y = cfg.n_y.saturating_sub(v);
    }
    if let Some(v) = s.paths_g {
        cfg.paths_g = v;
    }
    if let Some(v) = s.paths_h {
        cfg.paths_h = v;
    }
    if let Some(v) = s.wavelength_m {
        cfg.wavelength = v;
    }
    if let Some(v) = s.spacing_m {
        cfg.spacing = v;
    }
    if let Some(v) = s.dte_bits {
        cfg.dte_bits = v;
    }
    if let Some(v) = &s.pilot_power {
        cfg.pilot_power = v.watts()?;
    }
    if let Some(v) = &s.bs_power {
        cfg.bs_power = v.watts()?;
    }
    if let Some(v) = s.t_total {
        cfg.t_total = v;
    }
    if let Some(v) = s.dist_bs_irs_m {
        cfg.dist_bs_irs = v;
    }
    if let Some(v) = s.dist_irs_ue_m {
        cfg.dist_irs_ue = v;
    }
    if let Some([a, b]) = s.ue_area_azimuth_deg {
        cfg.ue_area.azimuth = (deg(a), deg(b));
    }
    if let Some([a, b]) = s.ue_area_elevation_deg {
        cfg.ue_area.elevation = (deg(a), deg(b));
    }
    if let Some(v) = s.los_bs_deg {
        cfg.los.bs_angle = deg(v);
    }
    if let Some(v) = s.los_irs_azimuth_deg {
        cfg.los.irs_azimuth = deg(v);
    }
    if let Some(v) = s.los_irs_elevation_deg {
        cfg.los.irs_elevation = deg(v);
    }
    if let Some(v) = s.nlos_gain_ratio {
        cfg.nlos_gain_ratio = v;
    }
    if let Some(v) = s.seed {
        cfg.seed = v;
    }
    // Noise powers: explicit values first, ratio forms take precedence.
    if let Some(v) = &s.noise_power {
        cfg.noise_power = v.watts()?;
    }
    if let Some(v) = &s.downlink_noise_power {
        cfg.downlink_noise_power = v.watts()?;
    }
    if let Some(v) = s.pnr_db {
        cfg = cfg.with_pnr_db(v);
    }
    if let Some(v) = s.snr_db {
        cfg = cfg.with_snr_db(v);
    }
    cfg.validate()?;

    let e = &raw.estimation;
    let mut est = EstimationOptions {
        rank_g: e.rank_g.unwrap_or(cfg.paths_g),
        rank_h: e.rank_h.unwrap_or(cfg.paths_h),
        ..EstimationOptions::default()
    };
    if let Some(v) = e.weight_scale {
        est.weight_scale = v;
        est.weight_scale_ste = v;
    }
    if let Some(v) = e.weight_scale_ste {
        est.weight_scale_ste = v;
    }
    if let Some([g, h, row, col]) = e.weights {
        est.weights = Some(RegWeights { g, h, row, col });
    }
    if let Some(v) = e.inner_tol {
        est.inner_tol = v;
    }
    if let Some(v) = e.inner_max {
        est.inner_max = v;
    }
    if let Some(v) = e.outer_tol {
        est.outer_tol = v;
    }
    if let Some(v) = e.outer_max {
        est.outer_max = v;
    }
    let mut cg = CgOptions::default();
    if let Some(v) = e.cg_max_iters {
        cg.max_iters = v;
    }
    if let Some(v) = e.cg_grad_tol {
        cg.grad_tol = v;
    }
    if let Some(v) = e.cg_rel_cost_tol {
        cg.rel_cost_tol = v;
    }
    est.cg = cg;

    let b = &raw.beamforming;
    let ste_mode = match b.ste_phase_mode.as_deref() {
        None | Some("wide-beam") | Some("wbs") => StePhaseMode::WideBeam,
        Some("random") => StePhaseMode::Random,
        Some(other) => {
            return Err(Error::Config(format!("unknown ste_phase_mode {other:?}")))
        }
    };
    let mut wbs = crate::beamforming::WbsOptions::default();
    if let Some(v) = b.wbs_restarts {
        wbs.restarts = v;
    }
    if let Some(v) = b.wbs_cg_max_iters {
        wbs.cg.max_iters = v;
    }

    let sw = &raw.sweep;
    let architecture = match sw.architecture.as_deref() {
        None => Architecture::HeIrs,
        Some(a) => Architecture::parse(a)?,
    };
    let sweep = match sw.variable.as_deref() {
        None => SweepVariable::TTra,
        Some(v) => SweepVariable::parse(v)?,
    };

    let p = &raw.power;
    let mut pm = PowerModel::default();
    if let Some(v) = &p.p_static {
        pm.p_static = v.watts()?;
    }
    if let Some(v) = &p.p_pin {
        pm.p_pin = v.watts()?;
    }
    if let Some(v) = &p.p_bs_cir {
        pm.p_bs_cir = v.watts()?;
    }
    if let Some(v) = &p.p_ue_cir {
        pm.p_ue_cir = v.watts()?;
    }

    let spec = ExperimentSpec {
        master_seed: sw.seed.unwrap_or(cfg.seed),
        base: cfg,
        architecture,
        sweep,
        grid: sw.grid.clone().unwrap_or_else(|| {
            vec![60.0, 120.0, 180.0, 240.0, 300.0]
        }),
        trials: sw.trials.unwrap_or(50),
        estimation: est,
        streams: b.streams.unwrap_or(1),
        wmmse_max_iters: b.wmmse_max_iters.unwrap_or(60),
        wmmse_rel_tol: b.wmmse_rel_tol.unwrap_or(1e-6),
        wbs,
        ste_mode,
        power_model: pm,
        threads: sw.threads.unwrap_or(0),
        t_tra: sw.t_tra.unwrap_or(150),
        pnr_snr_offset_db: sw.pnr_snr_offset_db.unwrap_or(15.0),
    };
    spec.validate()?;
    Ok(spec)
}

/// Read and parse a scenario file.
pub fn load_run_config(path: &std::path::Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_run_config(&text)
}
