//! Metrics, Monte-Carlo orchestration and architecture comparisons.
//!
//! A sweep runs `grid x trials` independent drops. Each trial synthesizes a
//! channel, generates pilots, estimates with DSD-MO, beamforms with
//! WMMSE-EI, and evaluates the achieved rates on the true channels; a
//! perfect-CSI solution is produced alongside for reference curves. Trials
//! are seeded by counter-derived streams so results are byte-identical
//! regardless of the number of worker threads.

pub mod config;
pub mod csvout;

pub use config::{load_run_config, parse_run_config, RunConfig};
pub use csvout::{emit_plotdata, records_csv, PlotKind};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::beamforming::{
    effective_rate, random_ste_phases, wbs_mo, wmmse_ei, BeamformingSolution, DownlinkChannels,
    WbsOptions, WideBeamSpec, WmmseOptions,
};
use crate::channel::{
    generate_pilot_block, observe, synthesize_channels, ChannelRealization, DictionaryResolutions,
    PilotBlock, SystemConfig,
};
use crate::error::{Error, Result};
use crate::estimation::{estimate_dsd_mo, EstimationOptions, EstimationProblem, EstimationResult};
use crate::linalg::{CMat, CVec};
use crate::seeding;

/// Reflecting-surface architecture under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Half DTEs, half STEs (as configured).
    HeIrs,
    /// All N elements dynamically tunable.
    Irs,
    /// Sparse surface: N/2 elements, all dynamically tunable.
    Sirs,
}

impl Architecture {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "he-irs" | "heirs" => Ok(Architecture::HeIrs),
            "irs" => Ok(Architecture::Irs),
            "sirs" => Ok(Architecture::Sirs),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Architecture::HeIrs => "he-irs",
            Architecture::Irs => "irs",
            Architecture::Sirs => "sirs",
        }
    }

    /// Adapt a scenario to this architecture.
    pub fn apply(&self, base: &SystemConfig) -> Result<SystemConfig> {
        let mut cfg = base.clone();
        match self {
            Architecture::HeIrs => {}
            Architecture::Irs => {
                cfg.n_dte_y = cfg.n_y;
                cfg.n_ste_y = 0;
            }
            Architecture::Sirs => {
                if cfg.n_y % 2 != 0 {
                    return Err(Error::Config(
                        "SIRS needs an even number of element columns".into(),
                    ));
                }
                cfg.n_y /= 2;
                cfg.n_dte_y = cfg.n_y;
                cfg.n_ste_y = 0;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// How the STE phases are fixed at deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StePhaseMode {
    WideBeam,
    Random,
}

/// PIN-diode power model of the surface and circuit power of BS/UEs.
#[derive(Debug, Clone)]
pub struct PowerModel {
    /// Static surface power (watts).
    pub p_static: f64,
    /// Power per on-state PIN diode (watts).
    pub p_pin: f64,
    pub p_bs_cir: f64,
    pub p_ue_cir: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            p_static: dbm_to_watt(15.0),
            p_pin: dbm_to_watt(12.0),
            p_bs_cir: dbm_to_watt(30.0),
            p_ue_cir: dbm_to_watt(15.0),
        }
    }
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

impl PowerModel {
    /// On-diode count for one DTE phase: the popcount of its level index
    /// (level 0 = all off; for 1-bit phases, the π state is one on diode).
    pub fn diode_count(phase: crate::linalg::C64, bits: u32) -> u32 {
        let levels = 1u32 << bits;
        let angle = phase.arg().rem_euclid(std::f64::consts::TAU);
        let level = (angle / std::f64::consts::TAU * levels as f64).round() as u32 % levels;
        level.count_ones()
    }

    /// `P_IRS = P_static + Σ_m t_m P_PIN` over the DTE phases.
    pub fn irs_power(&self, dte_phases: &CVec, bits: u32) -> f64 {
        let diodes: u32 = dte_phases
            .iter()
            .map(|&p| Self::diode_count(p, bits))
            .sum();
        self.p_static + diodes as f64 * self.p_pin
    }

    /// Total consumed power `P_b + P_cir + P_IRS`.
    pub fn total(&self, p_b: f64, users: usize, irs_power: f64) -> f64 {
        p_b + self.p_bs_cir + users as f64 * self.p_ue_cir + irs_power
    }
}

/// Average NMSE over users: `(1/K) Σ_k ||X_k - X̂_k||² / ||X_k||²`.
pub fn nmse(truth: &[CMat], est: &[CMat]) -> Result<f64> {
    if truth.len() != est.len() || truth.is_empty() {
        return Err(Error::dims("nmse", "user counts differ or empty"));
    }
    let mut acc = 0.0;
    for (t, e) in truth.iter().zip(est.iter()) {
        let den: f64 = t.iter().map(|z| z.norm_sqr()).sum();
        if den == 0.0 {
            return Err(Error::Empty("zero-norm ground truth in NMSE"));
        }
        let num: f64 = t
            .iter()
            .zip(e.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        acc += num / den;
    }
    Ok(acc / truth.len() as f64)
}

/// `Σ_k R_k / P_total` with the PIN power model.
pub fn energy_efficiency(
    rates: &[f64],
    dte_phases: &CVec,
    bits: u32,
    p_b: f64,
    users: usize,
    pm: &PowerModel,
) -> f64 {
    let irs = pm.irs_power(dte_phases, bits);
    let total = pm.total(p_b, users, irs);
    rates.iter().sum::<f64>() / total
}

/// Which scenario variable a sweep iterates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Total pilot overhead (symbols across all users).
    TTra,
    /// BS power budget in dBm; PNR tracks SNR by a fixed offset.
    PbDbm,
    /// Uplink pilot-to-noise ratio in dB.
    PnrDb,
    /// True path count P = Q of the synthesized channels.
    Rank,
}

impl SweepVariable {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t_tra" | "ttra" => Ok(SweepVariable::TTra),
            "p_b" | "pb" | "pb_dbm" => Ok(SweepVariable::PbDbm),
            "pnr" | "pnr_db" => Ok(SweepVariable::PnrDb),
            "rank" => Ok(SweepVariable::Rank),
            other => Err(Error::Config(format!("unknown sweep variable {other:?}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SweepVariable::TTra => "t_tra",
            SweepVariable::PbDbm => "p_b_dbm",
            SweepVariable::PnrDb => "pnr_db",
            SweepVariable::Rank => "rank",
        }
    }
}

/// A full experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub architecture: Architecture,
    pub sweep: SweepVariable,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub estimation: EstimationOptions,
    pub streams: usize,
    pub wmmse_max_iters: usize,
    pub wmmse_rel_tol: f64,
    pub wbs: WbsOptions,
    pub ste_mode: StePhaseMode,
    pub power_model: PowerModel,
    pub master_seed: u64,
    /// Worker threads; 0 uses the global default.
    pub threads: usize,
    /// Fixed pilot overhead for sweeps that do not vary it.
    pub t_tra: usize,
    /// PNR tracks SNR by this offset on power sweeps.
    pub pnr_snr_offset_db: f64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("at least one trial required".into()));
        }
        self.base.validate()
    }
}

/// Metrics of one trial at one grid point.
#[derive(Debug, Clone)]
pub struct MetricRecord {
    pub grid_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub t_tra: usize,
    pub pnr_db: f64,
    pub snr_db: f64,
    /// NMSE of the DTE cascaded channel.
    pub nmse_dte_ca: Option<f64>,
    /// NMSE of the STE equivalent channel (None when the surface has no STEs).
    pub nmse_ste_eq: Option<f64>,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub sum_rate_perfect: f64,
    pub p_total: f64,
    pub ee: f64,
    pub ee_perfect: f64,
    /// Wall-clock per trial; diagnostics only, never serialized.
    pub wall: std::time::Duration,
}

/// Everything produced by one trial, for single-shot CLI use.
pub struct TrialOutput {
    pub record: MetricRecord,
    pub channels: ChannelRealization,
    pub omega: CVec,
    pub estimation: Option<EstimationResult>,
    pub solution: BeamformingSolution,
    pub solution_perfect: BeamformingSolution,
}

/// Scenario for one grid point: applies the swept variable to the base.
fn grid_config(
    spec: &ExperimentSpec,
    cfg: &SystemConfig,
    value: f64,
) -> Result<(SystemConfig, usize)> {
    let mut cfg = cfg.clone();
    let mut t_tra = spec.t_tra;
    match spec.sweep {
        SweepVariable::TTra => {
            t_tra = value.round() as usize;
        }
        SweepVariable::PbDbm => {
            cfg.bs_power = dbm_to_watt(value);
            let snr_db = cfg.snr_db();
            cfg = cfg.with_pnr_db(snr_db + spec.pnr_snr_offset_db);
        }
        SweepVariable::PnrDb => {
            cfg = cfg.with_pnr_db(value);
        }
        SweepVariable::Rank => {
            let r = value.round() as usize;
            cfg.paths_g = r;
            cfg.paths_h = r;
        }
    }
    if t_tra < cfg.users {
        return Err(Error::Config(format!(
            "pilot overhead {t_tra} below one symbol per user"
        )));
    }
    Ok((cfg, t_tra))
}

/// STE phases for the scenario: the offline wide-beam solution (computed
/// once per sweep) or the random ablation drawn per trial.
fn trial_omega(
    spec: &ExperimentSpec,
    cfg: &SystemConfig,
    wide_beam: &Option<CVec>,
    rng: &mut ChaCha12Rng,
) -> CVec {
    if cfg.n_ste() == 0 {
        return CVec::zeros(0);
    }
    match spec.ste_mode {
        StePhaseMode::WideBeam => wide_beam.clone().expect("wide beam prepared"),
        StePhaseMode::Random => random_ste_phases(cfg.n_ste(), rng),
    }
}

/// Run one independent trial: synthesize, train, estimate, beamform, score.
pub fn run_trial(
    spec: &ExperimentSpec,
    cfg: &SystemConfig,
    grid_value: f64,
    t_tra: usize,
    trial: usize,
    wide_beam: &Option<CVec>,
) -> Result<TrialOutput> {
    let started = std::time::Instant::now();
    // One stream per trial, shared across grid points: every point of a
    // sweep sees the same channel drop, so per-trial curves are comparable
    // (and the perfect-CSI rate decreases exactly with the overhead).
    let seed = seeding::derive(spec.master_seed, trial as u64);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let ch = synthesize_channels(cfg, &mut rng);
    let omega = trial_omega(spec, cfg, wide_beam, &mut rng);

    // Sequential uplink training: each user gets an equal share of T_tra.
    let t_user = (t_tra / cfg.users).max(1);
    let mut blocks: Vec<PilotBlock> = Vec::with_capacity(cfg.users);
    for k in 0..cfg.users {
        let block = generate_pilot_block(cfg, k, t_user, &omega, &mut rng);
        blocks.push(observe(&block, &ch, &mut rng)?);
    }

    let dict = crate::channel::build_dictionaries(cfg, &DictionaryResolutions::critical(cfg))?;
    let est = estimate_dsd_mo(
        &EstimationProblem {
            blocks: &blocks,
            dict: &dict,
            options: spec.estimation.clone(),
        },
        seeding::derive(seed, 0xE57),
    )?;

    let truth_ca: Vec<CMat> = (0..cfg.users).map(|k| ch.cascaded_dte(k)).collect();
    let est_ca: Vec<CMat> = est.users.iter().map(|u| u.h_ca_dte.clone()).collect();
    let nmse_ca = nmse(&truth_ca, &est_ca)?;
    let nmse_eq = if cfg.n_ste() > 0 {
        let truth_eq: Vec<CMat> = (0..cfg.users)
            .map(|k| ch.ste_equivalent(k, &omega))
            .collect();
        let est_eq: Vec<CMat> = est.users.iter().map(|u| u.h_eq_ste.clone()).collect();
        Some(nmse(&truth_eq, &est_eq)?)
    } else {
        None
    };

    let wmmse_opts = WmmseOptions {
        max_iters: spec.wmmse_max_iters,
        rel_tol: spec.wmmse_rel_tol,
        streams: spec.streams,
        alphabet: Some(cfg.dte_phase_set()),
        ..WmmseOptions::default()
    };
    let est_channels = DownlinkChannels::from_estimates(&est, cfg.n_bs, cfg.n_ue);
    let solution = wmmse_ei(
        &est_channels,
        &omega,
        cfg.downlink_noise_power,
        cfg.bs_power,
        &wmmse_opts,
    )?;
    let true_channels = DownlinkChannels::from_true(&ch, &omega);
    let solution_perfect = wmmse_ei(
        &true_channels,
        &omega,
        cfg.downlink_noise_power,
        cfg.bs_power,
        &wmmse_opts,
    )?;

    // Achieved rates are always evaluated on the true channels.
    let h_e_true =
        crate::beamforming::EquivalentDownlink::build(&true_channels, &solution.dte_phases)?;
    let rates = effective_rate(
        &h_e_true.h_e,
        &solution.precoder,
        spec.streams,
        cfg.downlink_noise_power,
        t_tra,
        cfg.t_total,
    )?;
    let h_e_perfect = crate::beamforming::EquivalentDownlink::build(
        &true_channels,
        &solution_perfect.dte_phases,
    )?;
    let rates_perfect = effective_rate(
        &h_e_perfect.h_e,
        &solution_perfect.precoder,
        spec.streams,
        cfg.downlink_noise_power,
        t_tra,
        cfg.t_total,
    )?;

    let pm = &spec.power_model;
    let ee = energy_efficiency(
        &rates,
        &solution.dte_phases,
        cfg.dte_bits,
        cfg.bs_power,
        cfg.users,
        pm,
    );
    let ee_perfect = energy_efficiency(
        &rates_perfect,
        &solution_perfect.dte_phases,
        cfg.dte_bits,
        cfg.bs_power,
        cfg.users,
        pm,
    );
    let p_total = pm.total(
        cfg.bs_power,
        cfg.users,
        pm.irs_power(&solution.dte_phases, cfg.dte_bits),
    );

    let record = MetricRecord {
        grid_value,
        trial,
        seed,
        t_tra,
        pnr_db: cfg.pnr_db(),
        snr_db: cfg.snr_db(),
        nmse_dte_ca: Some(nmse_ca),
        nmse_ste_eq: nmse_eq,
        sum_rate: rates.iter().sum(),
        sum_rate_perfect: rates_perfect.iter().sum(),
        rates,
        p_total,
        ee,
        ee_perfect,
        wall: started.elapsed(),
    };
    Ok(TrialOutput {
        record,
        channels: ch,
        omega,
        estimation: Some(est),
        solution,
        solution_perfect,
    })
}

/// Result of a sweep: per-trial records sorted by (grid index, trial), plus
/// any recorded failures.
#[derive(Debug)]
pub struct SweepResult {
    pub records: Vec<MetricRecord>,
    pub failures: Vec<(f64, usize, String)>,
    pub architecture: Architecture,
    pub sweep: SweepVariable,
}

impl SweepResult {
    /// Mean of a metric per grid point, in first-seen grid order.
    pub fn mean_by_grid<F: Fn(&MetricRecord) -> f64>(&self, f: F) -> Vec<(f64, f64)> {
        let mut grids: Vec<f64> = Vec::new();
        for r in &self.records {
            if !grids.contains(&r.grid_value) {
                grids.push(r.grid_value);
            }
        }
        grids
            .into_iter()
            .map(|g| {
                let vals: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.grid_value == g)
                    .map(&f)
                    .collect();
                (g, vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    /// Median of an optional metric per grid point.
    pub fn median_by_grid<F: Fn(&MetricRecord) -> Option<f64>>(&self, f: F) -> Vec<(f64, f64)> {
        let mut grids: Vec<f64> = Vec::new();
        for r in &self.records {
            if !grids.contains(&r.grid_value) {
                grids.push(r.grid_value);
            }
        }
        grids
            .into_iter()
            .map(|g| {
                let mut vals: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.grid_value == g)
                    .filter_map(&f)
                    .collect();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let med = if vals.is_empty() {
                    f64::NAN
                } else if vals.len() % 2 == 1 {
                    vals[vals.len() / 2]
                } else {
                    0.5 * (vals[vals.len() / 2 - 1] + vals[vals.len() / 2])
                };
                (g, med)
            })
            .collect()
    }
}

/// Run the full sweep; deterministic for a fixed master seed regardless of
/// the worker-thread count. Aborts when more than 20% of trials fail.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cfg_arch = spec.architecture.apply(&spec.base)?;

    // Offline stage: the wide-beam STE phases are scenario constants.
    let wide_beam = if cfg_arch.n_ste() > 0 && spec.ste_mode == StePhaseMode::WideBeam {
        let wb_spec = WideBeamSpec::from_config(&cfg_arch);
        let mut opts = spec.wbs.clone();
        opts.seed = seeding::derive(spec.master_seed, 0x0FF1_1ABE);
        Some(wbs_mo(&wb_spec, &opts)?.omega)
    } else {
        None
    };

    let tasks: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|g| (0..spec.trials).map(move |t| (g, t)))
        .collect();

    let run_all = || -> Vec<(f64, usize, Result<MetricRecord>)> {
        tasks
            .par_iter()
            .map(|&(gi, trial)| {
                let value = spec.grid[gi];
                let out = grid_config(spec, &cfg_arch, value).and_then(|(cfg, t_tra)| {
                    run_trial(spec, &cfg, value, t_tra, trial, &wide_beam).map(|o| o.record)
                });
                (value, trial, out)
            })
            .collect()
    };

    let outcomes = if spec.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(run_all)
    } else {
        run_all()
    };

    let total = outcomes.len();
    let mut records = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (value, trial, out) in outcomes {
        match out {
            Ok(r) => records.push(r),
            Err(e) => failures.push((value, trial, e.to_string())),
        }
    }
    if failures.len() * 5 > total {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total,
        });
    }
    Ok(SweepResult {
        records,
        failures,
        architecture: spec.architecture,
        sweep: spec.sweep,
    })
}

/// The pilot overhead with the best mean sum rate; ties break toward the
/// smaller overhead.
pub fn best_ttra(result: &SweepResult) -> Result<f64> {
    if result.records.is_empty() {
        return Err(Error::Empty("sweep without records"));
    }
    let means = result.mean_by_grid(|r| r.sum_rate);
    let mut best = means[0];
    for &(g, m) in &means[1..] {
        if m > best.1 || (m == best.1 && g < best.0) {
            best = (g, m);
        }
    }
    Ok(best.0)
}
