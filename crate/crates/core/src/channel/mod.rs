//! Scenario geometry, stochastic channel synthesis and pilot generation.
//!
//! The HE-IRS is a `N_y x N_z` UPA split along the y axis into two adjacent
//! panels: the DTE panel occupies y indices `0..N_DTE_y`, the STE panel the
//! remaining `N_DTE_y..N_y`. Element `n = y * N_z + z`, so the DTE/STE column
//! blocks of the surface channel are contiguous.

pub mod arrays;
pub mod dictionary;
pub mod pilot;

pub use arrays::{ula_response, upa_response};
pub use dictionary::{build_dictionaries, Dictionaries, DictionaryResolutions};
pub use pilot::{generate_pilot_block, observe, phase_set, PilotBlock};

use ndarray::s;
use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{crandn, khatri_rao, CMat, CVec, C64};

/// Rectangular angular area (azimuth x elevation, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleArea {
    pub azimuth: (f64, f64),
    pub elevation: (f64, f64),
}

impl AngleArea {
    pub fn contains(&self, azimuth: f64, elevation: f64) -> bool {
        azimuth >= self.azimuth.0
            && azimuth <= self.azimuth.1
            && elevation >= self.elevation.0
            && elevation <= self.elevation.1
    }
}

/// Fixed line-of-sight geometry of the BS / HE-IRS deployment.
///
/// `bs_angle` is the BS-side angle of the LoS path, `irs_azimuth` and
/// `irs_elevation` the HE-IRS-side angles of the same path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosAngles {
    pub bs_angle: f64,
    pub irs_azimuth: f64,
    pub irs_elevation: f64,
}

/// All dimensional, geometric and power constants of one scenario.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub n_bs: usize,
    pub n_ue: usize,
    pub users: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub n_dte_y: usize,
    pub n_ste_y: usize,
    /// Path counts of the IRS-BS and UE-IRS channels.
    pub paths_g: usize,
    pub paths_h: usize,
    pub wavelength: f64,
    pub spacing: f64,
    /// DTE phase shift resolution in bits.
    pub dte_bits: u32,
    /// Pilot power (linear).
    pub pilot_power: f64,
    /// Uplink noise power (linear).
    pub noise_power: f64,
    /// BS downlink power budget (linear).
    pub bs_power: f64,
    /// Downlink noise power (linear).
    pub downlink_noise_power: f64,
    /// Symbols per coherence block.
    pub t_total: usize,
    pub dist_bs_irs: f64,
    pub dist_irs_ue: f64,
    /// UE location area (LoS angles at the HE-IRS).
    pub ue_area: AngleArea,
    pub los: LosAngles,
    /// Variance ratio of NLoS to LoS path gains.
    pub nlos_gain_ratio: f64,
    pub seed: u64,
}

impl SystemConfig {
    pub fn n_dte(&self) -> usize {
        self.n_dte_y * self.n_z
    }

    pub fn n_ste(&self) -> usize {
        self.n_ste_y * self.n_z
    }

    pub fn n_elements(&self) -> usize {
        self.n_y * self.n_z
    }

    /// Two-hop path loss factors `10^(-4.99 - 2 log10 d)`.
    pub fn tau_bi(&self) -> f64 {
        path_loss(self.dist_bs_irs)
    }

    pub fn tau_iu(&self) -> f64 {
        path_loss(self.dist_irs_ue)
    }

    /// Spacing scale `2 d / λ`; 1 at half-wavelength spacing.
    pub fn spatial_scale(&self) -> f64 {
        2.0 * self.spacing / self.wavelength
    }

    /// The discrete DTE phase alphabet.
    pub fn dte_phase_set(&self) -> Vec<C64> {
        phase_set(self.dte_bits)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dte_y + self.n_ste_y != self.n_y {
            return Err(Error::Config(format!(
                "panel split {} + {} != N_y = {}",
                self.n_dte_y, self.n_ste_y, self.n_y
            )));
        }
        if self.n_bs == 0 || self.n_ue == 0 || self.users == 0 || self.n_z == 0 || self.n_y == 0 {
            return Err(Error::Config("all array dimensions must be positive".into()));
        }
        if self.paths_g < 1 || self.paths_h < 1 {
            return Err(Error::Config("path counts must be at least 1".into()));
        }
        for (name, v) in [
            ("pilot_power", self.pilot_power),
            ("bs_power", self.bs_power),
            ("wavelength", self.wavelength),
            ("spacing", self.spacing),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.noise_power < 0.0 || self.downlink_noise_power < 0.0 {
            return Err(Error::Config("noise powers must be non-negative".into()));
        }
        if self.dte_bits < 1 {
            return Err(Error::Config("DTE phase resolution needs at least 1 bit".into()));
        }
        let a = &self.ue_area;
        if a.azimuth.0 > a.azimuth.1 || a.elevation.0 > a.elevation.1 {
            return Err(Error::Config("UE area bounds out of order".into()));
        }
        Ok(())
    }

    /// Full-scale scenario defaults: 12-antenna BS, 6-antenna UEs, 3 users,
    /// a 48-element surface split half DTE / half STE, 1-bit DTE phases,
    /// PNR 15 dB and SNR 0 dB.
    pub fn paper() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        SystemConfig {
            n_bs: 12,
            n_ue: 6,
            users: 3,
            n_y: 8,
            n_z: 6,
            n_dte_y: 4,
            n_ste_y: 4,
            paths_g: 3,
            paths_h: 3,
            wavelength: 0.04,
            spacing: 0.02,
            dte_bits: 1,
            pilot_power: 1.0,
            noise_power: 0.0,
            bs_power: 1.0, // 30 dBm
            downlink_noise_power: 0.0,
            t_total: 1500,
            dist_bs_irs: 25.0,
            dist_irs_ue: 12.0,
            ue_area: AngleArea {
                azimuth: (-45.0 * deg, 45.0 * deg),
                elevation: (90.0 * deg, 180.0 * deg),
            },
            los: LosAngles {
                bs_angle: 60.0 * deg,
                irs_azimuth: -60.0 * deg,
                irs_elevation: 120.0 * deg,
            },
            nlos_gain_ratio: 0.1,
            seed: 1,
        }
        .with_pnr_db(15.0)
        .with_snr_db(0.0)
    }

    /// Set the uplink noise power from a pilot-to-noise ratio
    /// `PNR = P_tr τ_BI τ_IU / σ²` given in dB.
    pub fn with_pnr_db(mut self, pnr_db: f64) -> Self {
        let pnr = 10f64.powf(pnr_db / 10.0);
        self.noise_power = self.pilot_power * self.tau_bi() * self.tau_iu() / pnr;
        self
    }

    /// Set the downlink noise power from `SNR = P_b τ_BI τ_IU / σ_d²` in dB.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        let snr = 10f64.powf(snr_db / 10.0);
        self.downlink_noise_power = self.bs_power * self.tau_bi() * self.tau_iu() / snr;
        self
    }

    pub fn pnr_db(&self) -> f64 {
        10.0 * (self.pilot_power * self.tau_bi() * self.tau_iu() / self.noise_power).log10()
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.bs_power * self.tau_bi() * self.tau_iu() / self.downlink_noise_power).log10()
    }
}

fn path_loss(d: f64) -> f64 {
    10f64.powf(-4.99 - 2.0 * d.log10())
}

/// One propagation path of the IRS-to-BS channel.
#[derive(Debug, Clone, Copy)]
pub struct GPath {
    pub gain: C64,
    pub bs_angle: f64,
    pub irs_azimuth: f64,
    pub irs_elevation: f64,
}

/// One propagation path of a UE-to-IRS channel.
#[derive(Debug, Clone, Copy)]
pub struct HPath {
    pub gain: C64,
    pub irs_azimuth: f64,
    pub irs_elevation: f64,
    pub ue_angle: f64,
}

/// Path parameters for one channel drop; index 0 is the LoS path.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub g: Vec<GPath>,
    pub h: Vec<Vec<HPath>>,
}

/// A synthesized channel realization with its DTE/STE partitions.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `N_BS x N` surface-to-BS channel.
    pub g: CMat,
    /// Per user `N x N_UE` UE-to-surface channels.
    pub h: Vec<CMat>,
    pub g_dte: CMat,
    pub g_ste: CMat,
    pub h_dte: Vec<CMat>,
    pub h_ste: Vec<CMat>,
    pub paths: PathSet,
    pub tau_bi: f64,
    pub tau_iu: f64,
}

impl ChannelRealization {
    /// Overall cascaded channel `H_ca,k = H_k^T ⊙ G` (`N_UE N_BS x N`).
    pub fn cascaded(&self, k: usize) -> CMat {
        khatri_rao(&self.h[k].t().to_owned(), &self.g).expect("consistent dims")
    }

    /// DTE-only cascaded channel `H_DTE,k^T ⊙ G_DTE`.
    pub fn cascaded_dte(&self, k: usize) -> CMat {
        khatri_rao(&self.h_dte[k].t().to_owned(), &self.g_dte).expect("consistent dims")
    }

    /// STE equivalent channel `G_STE diag(ω) H_STE,k` (`N_BS x N_UE`).
    pub fn ste_equivalent(&self, k: usize, omega: &CVec) -> CMat {
        ste_equivalent(&self.g_ste, &self.h_ste[k], omega)
    }
}

/// `G_STE diag(ω) H_STE` without materializing the diagonal matrix.
pub fn ste_equivalent(g_ste: &CMat, h_ste: &CMat, omega: &CVec) -> CMat {
    assert_eq!(g_ste.ncols(), omega.len());
    assert_eq!(h_ste.nrows(), omega.len());
    let mut scaled = h_ste.clone();
    for (mut row, w) in scaled.rows_mut().into_iter().zip(omega.iter()) {
        row.mapv_inplace(|z| z * w);
    }
    g_ste.dot(&scaled)
}

/// Draw a full channel realization per the Saleh-Valenzuela model.
///
/// LoS gains are `CN(0, τ)`, NLoS gains `CN(0, ratio·τ)`. The BS-IRS LoS
/// triple is fixed from the configuration; the UE-side LoS arrival angles
/// are drawn uniformly from the UE area per user. NLoS angles are uniform
/// over [-90°, 90°] azimuth and [0°, 180°] elevation.
pub fn synthesize_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelRealization {
    let kappa = cfg.spatial_scale();
    let tau_bi = cfg.tau_bi();
    let tau_iu = cfg.tau_iu();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let pi = std::f64::consts::PI;

    let mut g_paths = Vec::with_capacity(cfg.paths_g);
    for p in 0..cfg.paths_g {
        let var = if p == 0 { tau_bi } else { cfg.nlos_gain_ratio * tau_bi };
        let gain = crandn(rng) * var.sqrt();
        let (bs_angle, irs_azimuth, irs_elevation) = if p == 0 {
            (cfg.los.bs_angle, cfg.los.irs_azimuth, cfg.los.irs_elevation)
        } else {
            (
                rng.gen_range(-half_pi..half_pi),
                rng.gen_range(-half_pi..half_pi),
                rng.gen_range(0.0..pi),
            )
        };
        g_paths.push(GPath {
            gain,
            bs_angle,
            irs_azimuth,
            irs_elevation,
        });
    }

    let mut h_paths = Vec::with_capacity(cfg.users);
    for _ in 0..cfg.users {
        let mut paths = Vec::with_capacity(cfg.paths_h);
        for q in 0..cfg.paths_h {
            let var = if q == 0 { tau_iu } else { cfg.nlos_gain_ratio * tau_iu };
            let gain = crandn(rng) * var.sqrt();
            let (irs_azimuth, irs_elevation) = if q == 0 {
                (
                    rng.gen_range(cfg.ue_area.azimuth.0..=cfg.ue_area.azimuth.1),
                    rng.gen_range(cfg.ue_area.elevation.0..=cfg.ue_area.elevation.1),
                )
            } else {
                (rng.gen_range(-half_pi..half_pi), rng.gen_range(0.0..pi))
            };
            let ue_angle = rng.gen_range(-half_pi..half_pi);
            paths.push(HPath {
                gain,
                irs_azimuth,
                irs_elevation,
                ue_angle,
            });
        }
        h_paths.push(paths);
    }

    let n = cfg.n_elements();
    let mut g = CMat::zeros((cfg.n_bs, n));
    let scale_g = Complex::new((cfg.n_bs as f64 * n as f64 / cfg.paths_g as f64).sqrt(), 0.0);
    for p in &g_paths {
        let a_bs = ula_response(kappa * p.bs_angle.cos(), cfg.n_bs);
        let a_irs =
            arrays::upa_response_scaled(p.irs_azimuth, p.irs_elevation, cfg.n_y, cfg.n_z, kappa);
        for i in 0..cfg.n_bs {
            for j in 0..n {
                g[(i, j)] += scale_g * p.gain * a_bs[i] * a_irs[j].conj();
            }
        }
    }

    let scale_h = Complex::new((cfg.n_ue as f64 * n as f64 / cfg.paths_h as f64).sqrt(), 0.0);
    let mut h = Vec::with_capacity(cfg.users);
    for paths in &h_paths {
        let mut hk = CMat::zeros((n, cfg.n_ue));
        for q in paths {
            let a_irs =
                arrays::upa_response_scaled(q.irs_azimuth, q.irs_elevation, cfg.n_y, cfg.n_z, kappa);
            let a_ue = ula_response(kappa * q.ue_angle.cos(), cfg.n_ue);
            for i in 0..n {
                for j in 0..cfg.n_ue {
                    hk[(i, j)] += scale_h * q.gain * a_irs[i] * a_ue[j].conj();
                }
            }
        }
        h.push(hk);
    }

    let n_dte = cfg.n_dte();
    let g_dte = g.slice(s![.., ..n_dte]).to_owned();
    let g_ste = g.slice(s![.., n_dte..]).to_owned();
    let h_dte: Vec<CMat> = h.iter().map(|hk| hk.slice(s![..n_dte, ..]).to_owned()).collect();
    let h_ste: Vec<CMat> = h.iter().map(|hk| hk.slice(s![n_dte.., ..]).to_owned()).collect();

    ChannelRealization {
        g,
        h,
        g_dte,
        g_ste,
        h_dte,
        h_ste,
        paths: PathSet {
            g: g_paths,
            h: h_paths,
        },
        tau_bi,
        tau_iu,
    }
}

#[cfg(test)]
pub(crate) fn small_cfg() -> SystemConfig {
    let deg = std::f64::consts::PI / 180.0;
    SystemConfig {
        n_bs: 4,
        n_ue: 2,
        users: 2,
        n_y: 3,
        n_z: 2,
        n_dte_y: 2,
        n_ste_y: 1,
        paths_g: 2,
        paths_h: 2,
        wavelength: 0.04,
        spacing: 0.02,
        dte_bits: 1,
        pilot_power: 1.0,
        noise_power: 1e-3,
        bs_power: 1.0,
        downlink_noise_power: 1e-3,
        t_total: 1500,
        dist_bs_irs: 25.0,
        dist_irs_ue: 12.0,
        ue_area: AngleArea {
            azimuth: (-45.0 * deg, 45.0 * deg),
            elevation: (90.0 * deg, 180.0 * deg),
        },
        los: LosAngles {
            bs_angle: 60.0 * deg,
            irs_azimuth: -60.0 * deg,
            irs_elevation: 120.0 * deg,
        },
        nlos_gain_ratio: 0.1,
        seed: 7,
    }
}
