//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured figures when it succeeds.

use heirs_core::channel::{
    build_dictionaries, generate_pilot_block, observe, synthesize_channels, AngleArea,
    DictionaryResolutions, LosAngles, SystemConfig,
};
use heirs_core::estimation::{
    dsd_objective, estimate_dsd_mo, grad_g_dte, grad_h_dte, grad_h_eq_ste, measurement_matrix,
    EstimationOptions, EstimationProblem, RegWeights, UserProblem,
};
use heirs_core::linalg::{crand_phase, crandn_mat, decomp, fro_inner_re, CMat, CVec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn deg(x: f64) -> f64 {
    x * std::f64::consts::PI / 180.0
}

fn scaled_cfg(
    n_bs: usize,
    n_ue: usize,
    n_y: usize,
    n_z: usize,
    n_dte_y: usize,
    paths: usize,
) -> SystemConfig {
    SystemConfig {
        n_bs,
        n_ue,
        users: 1,
        n_y,
        n_z,
        n_dte_y,
        n_ste_y: n_y - n_dte_y,
        paths_g: paths,
        paths_h: paths,
        wavelength: 0.04,
        spacing: 0.02,
        dte_bits: 1,
        pilot_power: 1.0,
        noise_power: 0.0,
        bs_power: 1.0,
        downlink_noise_power: 1e-3,
        t_total: 1500,
        dist_bs_irs: 25.0,
        dist_irs_ue: 12.0,
        ue_area: AngleArea {
            azimuth: (deg(-45.0), deg(45.0)),
            elevation: (deg(90.0), deg(180.0)),
        },
        los: LosAngles {
            bs_angle: deg(60.0),
            irs_azimuth: deg(-60.0),
            irs_elevation: deg(120.0),
        },
        nlos_gain_ratio: 0.1,
        seed: 0,
    }
}

fn nmse(truth: &CMat, est: &CMat) -> f64 {
    let num: f64 = (truth - est).iter().map(|z| z.norm_sqr()).sum();
    let den: f64 = truth.iter().map(|z| z.norm_sqr()).sum();
    num / den
}

/// Criterion 1: the stacked measurement matrix has full column rank iff at
/// most one element is static (N_BS=2, N_UE=2, N=6, T=48, 20 seeds).
#[test]
fn criterion_1_lemma1_rank_oracle() {
    let start = std::time::Instant::now();
    let t_pilots = 48;
    for seed in 0..20u64 {
        for n_ste_y in 0..=3usize {
            let cfg = scaled_cfg(2, 2, 6, 1, 6 - n_ste_y, 2);
            let mut rng = ChaCha12Rng::seed_from_u64(1000 + seed);
            let ch = synthesize_channels(&cfg, &mut rng);
            let omega = CVec::from_shape_fn(cfg.n_ste(), |_| crand_phase(&mut rng));
            let block = generate_pilot_block(&cfg, 0, t_pilots, &omega, &mut rng);
            let block = observe(&block, &ch, &mut rng).unwrap();
            let j = measurement_matrix(&block, cfg.n_bs);
            let full = cfg.n_ue * cfg.n_bs * cfg.n_elements();
            let rank = decomp::numerical_rank_of(&j);
            if n_ste_y <= 1 {
                assert_eq!(rank, full, "seed {seed}, N_STE {n_ste_y}: expected full rank");
            } else {
                assert!(rank < full, "seed {seed}, N_STE {n_ste_y}: expected deficiency");
            }
        }
    }
    println!(
        "PASS criterion 1: rank(J) full iff N_STE <= 1 over 20 seeds x 4 configs ({:.2?})",
        start.elapsed()
    );
}

/// Criterion 2: analytic gradients match central finite differences to
/// relative error < 1e-5 (zero regularization), 20 directions x 10 instances.
#[test]
fn criterion_2_gradient_suite() {
    let start = std::time::Instant::now();
    let mut worst: f64 = 0.0;
    for instance in 0..10u64 {
        let cfg = scaled_cfg(4, 3, 4, 2, 2, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(2000 + instance);
        let dict = build_dictionaries(&cfg, &DictionaryResolutions::critical(&cfg)).unwrap();
        let t_len = 6;
        let alphabet = cfg.dte_phase_set();
        let phases = CMat::from_shape_fn((cfg.n_dte(), t_len), |_| {
            alphabet[rng.gen_range(0..alphabet.len())]
        });
        let pilots = crandn_mat(&mut rng, cfg.n_ue, t_len);
        let received = crandn_mat(&mut rng, cfg.n_bs, t_len);
        let prob = UserProblem {
            pilots: &pilots,
            received: &received,
            dte_phases: &phases,
            dict: &dict,
            weights: RegWeights::default(),
        };
        let g = crandn_mat(&mut rng, cfg.n_bs, cfg.n_dte());
        let h = crandn_mat(&mut rng, cfg.n_dte(), cfg.n_ue);
        let heq = crandn_mat(&mut rng, cfg.n_bs, cfg.n_ue);
        let step = 1e-6;

        let mut check = |grad: &CMat, cost: &dyn Fn(&CMat) -> f64, at: &CMat| {
            for _ in 0..20 {
                let dir = crandn_mat(&mut rng, at.nrows(), at.ncols());
                let fp = cost(&(at + &dir.mapv(|z| z * step)));
                let fm = cost(&(at - &dir.mapv(|z| z * step)));
                let fd = (fp - fm) / (2.0 * step);
                let an = 2.0 * fro_inner_re(grad, &dir);
                let rel = (fd - an).abs() / an.abs().max(1.0);
                worst = worst.max(rel);
                assert!(rel < 1e-5, "instance {instance}: rel err {rel:.3e}");
            }
        };

        let gg = grad_g_dte(&prob, &g, &h, &heq);
        check(&gg, &|gm: &CMat| dsd_objective(&prob, gm, &h, &heq), &g);
        let gh = grad_h_dte(&prob, &g, &h, &heq);
        check(&gh, &|hm: &CMat| dsd_objective(&prob, &g, hm, &heq), &h);
        let ge = grad_h_eq_ste(&prob, &g, &h, &heq);
        check(&ge, &|em: &CMat| dsd_objective(&prob, &g, &h, em), &heq);
    }
    println!(
        "PASS criterion 2: gradient suite, worst relative error {worst:.3e} ({:.2?})",
        start.elapsed()
    );
}

/// Criterion 3: noiseless DSD-MO recovery at N=16 (8 DTE / 8 STE), P=Q=2,
/// T=120: both NMSEs < 1e-3 in at least 18 of 20 seeds.
#[test]
fn criterion_3_noiseless_recovery() {
    let start = std::time::Instant::now();
    let mut ok = 0usize;
    let seeds = 20u64;
    for seed in 0..seeds {
        let cfg = scaled_cfg(8, 4, 4, 4, 2, 2);
        assert_eq!(cfg.n_elements(), 16);
        assert_eq!(cfg.n_dte(), 8);
        let mut rng = ChaCha12Rng::seed_from_u64(3000 + seed);
        let ch = synthesize_channels(&cfg, &mut rng);
        let omega = CVec::from_shape_fn(cfg.n_ste(), |_| crand_phase(&mut rng));
        let block = generate_pilot_block(&cfg, 0, 120, &omega, &mut rng);
        let block = observe(&block, &ch, &mut rng).unwrap();
        let dict = build_dictionaries(&cfg, &DictionaryResolutions::critical(&cfg)).unwrap();
        let problem = EstimationProblem {
            blocks: std::slice::from_ref(&block),
            dict: &dict,
            options: EstimationOptions {
                rank_g: 2,
                rank_h: 2,
                ..EstimationOptions::default()
            },
        };
        let result = match estimate_dsd_mo(&problem, 3100 + seed) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("seed {seed}: solver error {e}");
                continue;
            }
        };
        let est = &result.users[0];
        let e_ca = nmse(&ch.cascaded_dte(0), &est.h_ca_dte);
        let e_eq = nmse(&ch.ste_equivalent(0, &omega), &est.h_eq_ste);
        if e_ca < 1e-3 && e_eq < 1e-3 {
            ok += 1;
        } else {
            eprintln!("seed {seed}: NMSE_DTE,ca {e_ca:.3e}, NMSE_STE,eq {e_eq:.3e}");
        }
    }
    assert!(ok >= 18, "only {ok}/20 seeds recovered");
    println!(
        "PASS criterion 3: noiseless recovery in {ok}/20 seeds ({:.2?})",
        start.elapsed()
    );
}
