//! `heirs` — HE-IRS simulator command line.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use heirs_core::beamforming::{wbs_mo, WideBeamSpec};
use heirs_core::channel::{
    build_dictionaries, generate_pilot_block, observe, synthesize_channels,
    DictionaryResolutions,
};
use heirs_core::dump::{write_dump, Entry};
use heirs_core::estimation::{estimate_dsd_mo, ls_overall_cascaded, EstimationProblem};
use heirs_core::experiments::{
    self, best_ttra, emit_plotdata, load_run_config, parse_run_config, records_csv, run_sweep,
    ExperimentSpec, PlotKind, SweepVariable,
};
use heirs_core::linalg::CVec;

#[derive(Parser)]
#[command(
    name = "heirs",
    about = "Heterogeneous-IRS multi-user MIMO simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep described by a scenario file and emit CSVs.
    Run(RunArgs),
    /// Single-shot channel estimation with matrix dumps.
    Estimate(EstimateArgs),
    /// Single-shot two-stage beamforming with solution dumps.
    Beamform(BeamformArgs),
    /// Rank-deficiency table of the stacked measurement matrix.
    Lemma1(Lemma1Args),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file.
    spec: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Scenario TOML file (defaults to the built-in full-scale scenario).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Total pilot overhead across users.
    #[arg(long)]
    t_tra: Option<usize>,
    /// Matrix dump destination.
    #[arg(long, default_value = "estimate_dump.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct BeamformArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Beamform on the true channels instead of estimates.
    #[arg(long)]
    perfect: bool,
    #[arg(long)]
    t_tra: Option<usize>,
    #[arg(long, default_value = "beamform_dump.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct Lemma1Args {
    /// Pilot count.
    #[arg(long, default_value_t = 48)]
    t: usize,
    /// Seeds to average the diagnosis over.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Beamform(args) => cmd_beamform(args),
        Command::Lemma1(args) => cmd_lemma1(args),
    }
}

fn load_spec(config: &Option<PathBuf>) -> Result<ExperimentSpec> {
    match config {
        Some(path) => load_run_config(path).with_context(|| format!("loading {path:?}")),
        None => Ok(parse_run_config("")?),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut spec =
        load_run_config(&args.spec).with_context(|| format!("loading {:?}", args.spec))?;
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    if let Some(threads) = args.threads {
        spec.threads = threads;
    }
    fs::create_dir_all(&args.out)?;

    eprintln!(
        "running {} grid points x {} trials ({} sweep, {} architecture, seed {})",
        spec.grid.len(),
        spec.trials,
        spec.sweep.label(),
        spec.architecture.label(),
        spec.master_seed
    );
    let result = run_sweep(&spec)?;
    if !result.failures.is_empty() {
        eprintln!("{} trials failed:", result.failures.len());
        for (grid, trial, err) in &result.failures {
            eprintln!("  grid {grid} trial {trial}: {err}");
        }
    }

    let records_path = args.out.join("records.csv");
    records_csv(&result, fs::File::create(&records_path)?)?;

    let kind = match spec.sweep {
        SweepVariable::TTra => PlotKind::RateVsT,
        SweepVariable::PbDbm => PlotKind::RateVsPb,
        SweepVariable::PnrDb => PlotKind::NmseVsT,
        SweepVariable::Rank => PlotKind::NmseVsRank,
    };
    emit_plotdata(
        &result,
        kind,
        fs::File::create(args.out.join(kind.file_name()))?,
    )?;
    if spec.sweep == SweepVariable::TTra {
        emit_plotdata(
            &result,
            PlotKind::NmseVsT,
            fs::File::create(args.out.join(PlotKind::NmseVsT.file_name()))?,
        )?;
    }
    emit_plotdata(
        &result,
        PlotKind::EeCdf,
        fs::File::create(args.out.join(PlotKind::EeCdf.file_name()))?,
    )?;

    for (grid, mean) in result.mean_by_grid(|r| r.sum_rate) {
        println!(
            "{} = {grid}: mean sum rate {mean:.4} b/s/Hz",
            spec.sweep.label()
        );
    }
    if spec.sweep == SweepVariable::TTra {
        println!("best t_tra: {}", best_ttra(&result)?);
    }
    println!("wrote {}", records_path.display());
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let mut spec = load_spec(&args.config)?;
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if let Some(t) = args.t_tra {
        spec.t_tra = t;
    }
    let cfg = spec.architecture.apply(&spec.base)?;
    let mut rng = seeded_rng(spec.master_seed);

    let ch = synthesize_channels(&cfg, &mut rng);
    let omega = scenario_omega(&spec, &cfg)?;
    let t_user = (spec.t_tra / cfg.users).max(1);
    let mut blocks = Vec::new();
    for k in 0..cfg.users {
        let b = generate_pilot_block(&cfg, k, t_user, &omega, &mut rng);
        blocks.push(observe(&b, &ch, &mut rng)?);
    }
    let dict = build_dictionaries(&cfg, &DictionaryResolutions::critical(&cfg))?;
    let est = estimate_dsd_mo(
        &EstimationProblem {
            blocks: &blocks,
            dict: &dict,
            options: spec.estimation.clone(),
        },
        spec.master_seed,
    )?;

    let mut entries = vec![Entry::Vector("omega".into(), omega.clone())];
    let mut nmse_ca_all = Vec::new();
    let mut nmse_eq_all = Vec::new();
    for (k, u) in est.users.iter().enumerate() {
        entries.push(Entry::Matrix(format!("g_dte_user{k}"), u.g_dte.clone()));
        entries.push(Entry::Matrix(format!("h_dte_user{k}"), u.h_dte.clone()));
        entries.push(Entry::Matrix(format!("h_eq_ste_user{k}"), u.h_eq_ste.clone()));
        entries.push(Entry::Matrix(format!("h_ca_dte_user{k}"), u.h_ca_dte.clone()));
        let truth_ca = ch.cascaded_dte(k);
        let e_ca = experiments::nmse(&[truth_ca], &[u.h_ca_dte.clone()])?;
        nmse_ca_all.push(e_ca);
        if cfg.n_ste() > 0 {
            let truth_eq = ch.ste_equivalent(k, &omega);
            nmse_eq_all.push(experiments::nmse(&[truth_eq], &[u.h_eq_ste.clone()])?);
        }
        println!(
            "user {k}: outer {} inner {} residual {:.3e} NMSE_DTE,ca {:.3e}",
            u.outer_iterations, u.inner_iterations, u.residual_norm, e_ca
        );
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!("NMSE_DTE,ca (mean over users): {:.6e}", mean(&nmse_ca_all));
    if !nmse_eq_all.is_empty() {
        println!("NMSE_STE,eq (mean over users): {:.6e}", mean(&nmse_eq_all));
    }
    fs::write(&args.out, write_dump(&entries))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_beamform(args: BeamformArgs) -> Result<()> {
    let mut spec = load_spec(&args.config)?;
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if let Some(t) = args.t_tra {
        spec.t_tra = t;
    }
    let cfg = spec.architecture.apply(&spec.base)?;
    let omega = scenario_omega(&spec, &cfg)?;
    let wide = if cfg.n_ste() > 0 {
        Some(omega)
    } else {
        None
    };
    let out = experiments::run_trial(&spec, &cfg, 0.0, spec.t_tra, 0, &wide)?;
    let sol = if args.perfect {
        &out.solution_perfect
    } else {
        &out.solution
    };

    let mut entries = vec![
        Entry::Vector("omega".into(), sol.omega.clone()),
        Entry::Vector("phi_d".into(), sol.dte_phases.clone()),
        Entry::Matrix("precoder".into(), sol.precoder.clone()),
        Entry::Scalar("transmit_power".into(), sol.transmit_power()),
    ];
    if cfg.dte_bits == 1 {
        let bits: String = sol
            .dte_phases
            .iter()
            .map(|z| if z.re >= 0.0 { '0' } else { '1' })
            .collect();
        println!("phi_d bit pattern: {bits}");
        entries.push(Entry::Scalar("phi_d_bits".into(), bits.len() as f64));
    }
    let r = &out.record;
    let (sum_rate, ee) = if args.perfect {
        (r.sum_rate_perfect, r.ee_perfect)
    } else {
        (r.sum_rate, r.ee)
    };
    for (k, rate) in r.rates.iter().enumerate() {
        println!("user {k}: rate {rate:.4} b/s/Hz");
    }
    println!(
        "sum rate: {sum_rate:.4} b/s/Hz (perfect CSI: {:.4})",
        r.sum_rate_perfect
    );
    println!("energy efficiency: {ee:.4} b/Hz/J");
    println!("WMMSE iterations: {}", sol.iterations);
    fs::write(&args.out, write_dump(&entries))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_lemma1(args: Lemma1Args) -> Result<()> {
    // Scaled-down scenario: N_BS=2, N_UE=2, N=6 elements in one column.
    let base = parse_run_config(
        r#"
[system]
n_bs = 2
n_ue = 2
users = 1
n_y = 6
n_z = 1
n_dte_y = 6
paths_g = 2
paths_h = 2
pnr_db = 200.0
"#,
    )?;
    if args.t == 0 {
        bail!("need at least one pilot");
    }
    println!("T = {} pilots, {} seeds, N = 6 elements", args.t, args.seeds);
    println!(
        "{:>6} {:>10} {:>10} {:>11} {:>12}",
        "N_STE", "rank(J)", "full", "deficiency", "LS NMSE"
    );
    for n_ste_y in 0..=4usize {
        let mut cfg = base.base.clone();
        cfg.n_dte_y = 6 - n_ste_y;
        cfg.n_ste_y = n_ste_y;
        cfg.noise_power = 0.0;
        let full = cfg.n_ue * cfg.n_bs * cfg.n_elements();
        let mut ranks = Vec::new();
        let mut nmses = Vec::new();
        for seed in 0..args.seeds {
            let mut rng = seeded_rng(seed);
            let ch = synthesize_channels(&cfg, &mut rng);
            let omega = CVec::from_shape_fn(cfg.n_ste(), |_| {
                heirs_core::linalg::crand_phase(&mut rng)
            });
            let block = generate_pilot_block(&cfg, 0, args.t, &omega, &mut rng);
            let block = observe(&block, &ch, &mut rng)?;
            let diag = ls_overall_cascaded(&block, cfg.n_bs)?;
            ranks.push(diag.rank);
            let truth = ch.cascaded(0);
            nmses.push(experiments::nmse(&[truth], &[diag.h_ca])?);
        }
        let rank = ranks[0];
        let all_same = ranks.iter().all(|&r| r == rank);
        let mean_nmse = nmses.iter().sum::<f64>() / nmses.len() as f64;
        println!(
            "{:>6} {:>10} {:>10} {:>11} {:>12.3e}{}",
            n_ste_y,
            rank,
            rank == full,
            full - rank,
            mean_nmse,
            if all_same { "" } else { "  (rank varies)" }
        );
    }
    println!("full column rank requires N_UE*N_BS*N = 24");
    Ok(())
}

fn scenario_omega(spec: &ExperimentSpec, cfg: &heirs_core::channel::SystemConfig) -> Result<CVec> {
    if cfg.n_ste() == 0 {
        return Ok(CVec::zeros(0));
    }
    let wb = wbs_mo(&WideBeamSpec::from_config(cfg), &spec.wbs)?;
    Ok(wb.omega)
}

fn seeded_rng(seed: u64) -> rand_chacha::ChaCha12Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha12Rng::seed_from_u64(seed)
}
