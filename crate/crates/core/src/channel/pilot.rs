//! Uplink pilot blocks: pilot symbols, DTE training phases, observations.

use ndarray::s;
use num_complex::Complex;
use rand::Rng;

use super::{ChannelRealization, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{crandn, crandn_mat, CMat, CVec, C64};

/// The discrete phase alphabet `F = {1, e^{j2π/2^b}, ..., e^{j2π(2^b-1)/2^b}}`.
pub fn phase_set(bits: u32) -> Vec<C64> {
    let levels = 1usize << bits;
    (0..levels)
        .map(|l| Complex::from_polar(1.0, std::f64::consts::TAU * l as f64 / levels as f64))
        .collect()
}

/// One user's pilot block: symbols, per-symbol DTE phase schedule, the fixed
/// STE configuration, and (after [`observe`]) the received signals.
#[derive(Debug, Clone)]
pub struct PilotBlock {
    pub user: usize,
    /// `N_UE x T` pilot symbols, each column with squared norm `P_tr`.
    pub pilots: CMat,
    /// `N_DTE x T`; column `t` is the DTE phase vector during pilot `t`.
    pub dte_phases: CMat,
    /// Length `N_STE`, constant across pilots and users.
    pub ste_phases: CVec,
    /// `N_BS x T` received observations, if observed.
    pub received: Option<CMat>,
    pub noise_power: f64,
    pub pilot_power: f64,
}

impl PilotBlock {
    pub fn t_len(&self) -> usize {
        self.pilots.ncols()
    }

    /// Full surface phase vector `ψ[t] = [φ[t]; ω]`.
    pub fn psi(&self, t: usize) -> CVec {
        let n_dte = self.dte_phases.nrows();
        let n = n_dte + self.ste_phases.len();
        let mut out = CVec::zeros(n);
        out.slice_mut(s![..n_dte]).assign(&self.dte_phases.column(t));
        out.slice_mut(s![n_dte..]).assign(&self.ste_phases);
        out
    }

    pub fn received(&self) -> Result<&CMat> {
        self.received.as_ref().ok_or(Error::Empty("pilot block has no observations"))
    }
}

/// Draw pilot symbols and a DTE phase schedule (no observations yet).
///
/// Pilot columns are Gaussian vectors scaled to power `P_tr`; the DTE phases
/// are i.i.d. uniform over the discrete alphabet, which keeps the stacked
/// measurement well conditioned for 1-bit phases.
pub fn generate_pilot_block<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    user: usize,
    t_count: usize,
    omega: &CVec,
    rng: &mut R,
) -> PilotBlock {
    assert_eq!(omega.len(), cfg.n_ste(), "STE configuration length");
    let mut pilots = crandn_mat(rng, cfg.n_ue, t_count);
    for mut col in pilots.columns_mut() {
        let norm: f64 = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            let scale = cfg.pilot_power.sqrt() / norm;
            col.mapv_inplace(|z| z * scale);
        }
    }
    let alphabet = cfg.dte_phase_set();
    let dte_phases = CMat::from_shape_fn((cfg.n_dte(), t_count), |_| {
        alphabet[rng.gen_range(0..alphabet.len())]
    });
    PilotBlock {
        user,
        pilots,
        dte_phases,
        ste_phases: omega.clone(),
        received: None,
        noise_power: cfg.noise_power,
        pilot_power: cfg.pilot_power,
    }
}

/// Pass the pilot block through the channel:
/// `r[t] = (G_DTE Φ[t] H_DTE + G_STE Ω H_STE) s[t] + z[t]`, `z ~ CN(0, σ²I)`.
pub fn observe<R: Rng + ?Sized>(
    block: &PilotBlock,
    ch: &ChannelRealization,
    rng: &mut R,
) -> Result<PilotBlock> {
    let k = block.user;
    let n_dte = ch.g_dte.ncols();
    if block.dte_phases.nrows() != n_dte {
        return Err(Error::dims(
            "observe",
            format!(
                "DTE phase rows {} != channel DTE columns {n_dte}",
                block.dte_phases.nrows()
            ),
        ));
    }
    if block.ste_phases.len() != ch.g_ste.ncols() {
        return Err(Error::dims(
            "observe",
            format!(
                "STE phase length {} != channel STE columns {}",
                block.ste_phases.len(),
                ch.g_ste.ncols()
            ),
        ));
    }
    if block.pilots.nrows() != ch.h[k].ncols() {
        return Err(Error::dims(
            "observe",
            format!(
                "pilot rows {} != UE antennas {}",
                block.pilots.nrows(),
                ch.h[k].ncols()
            ),
        ));
    }

    let t_count = block.t_len();
    let n_bs = ch.g.nrows();
    // STE contribution is constant across pilots.
    let heq = ch.ste_equivalent(k, &block.ste_phases);
    let mut received = heq.dot(&block.pilots);

    // DTE contribution: G_DTE (Φ[t] ∘ (H_DTE s[t])) column by column.
    let hs = ch.h_dte[k].dot(&block.pilots); // N_DTE x T
    let mut x = hs;
    x.zip_mut_with(&block.dte_phases, |v, &p| *v *= p);
    received = received + ch.g_dte.dot(&x);

    if block.noise_power > 0.0 {
        let sigma = block.noise_power.sqrt();
        for t in 0..t_count {
            for i in 0..n_bs {
                received[(i, t)] += crandn(rng) * sigma;
            }
        }
    }

    let mut out = block.clone();
    out.received = Some(received);
    Ok(out)
}
