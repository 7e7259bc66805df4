//! Online beamforming: WMMSE block updates for the receivers, weights and
//! BS precoder, interleaved with per-element discrete DTE phase updates.
//!
//! The downlink equivalent channel of user `k` is
//! `H_e,k = (mat(H_ca,k^DTE φ_d^*) + H_eq,k^STE)^H`, linear in each DTE phase:
//! `H_e,k = φ_m U_{k,m} + T_k` with `U_{k,m} = mat([H_ca]_{:,m})^H`. Each
//! element update minimizes the WMMSE objective exactly over the discrete
//! phase alphabet, so the cost is non-increasing across all four block
//! updates.

use num_complex::Complex;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::estimation::EstimationResult;
use crate::linalg::{adjoint, decomp, eye, fro_inner, unvec, CMat, CVec, C64, ONE};

/// Per-user downlink channel pair consumed by the online beamformer:
/// the DTE cascaded channel and the STE equivalent channel.
#[derive(Debug, Clone)]
pub struct DownlinkChannels {
    /// Per user `N_BS N_UE x N_DTE`.
    pub h_ca_dte: Vec<CMat>,
    /// Per user `N_BS x N_UE`.
    pub h_eq_ste: Vec<CMat>,
    pub n_bs: usize,
    pub n_ue: usize,
}

impl DownlinkChannels {
    pub fn from_estimates(est: &EstimationResult, n_bs: usize, n_ue: usize) -> Self {
        DownlinkChannels {
            h_ca_dte: est.users.iter().map(|u| u.h_ca_dte.clone()).collect(),
            h_eq_ste: est.users.iter().map(|u| u.h_eq_ste.clone()).collect(),
            n_bs,
            n_ue,
        }
    }

    /// Ground-truth channels for a given STE configuration.
    pub fn from_true(ch: &ChannelRealization, omega: &CVec) -> Self {
        let users = ch.h.len();
        DownlinkChannels {
            h_ca_dte: (0..users).map(|k| ch.cascaded_dte(k)).collect(),
            h_eq_ste: (0..users).map(|k| ch.ste_equivalent(k, omega)).collect(),
            n_bs: ch.g.nrows(),
            n_ue: ch.h[0].ncols(),
        }
    }

    pub fn users(&self) -> usize {
        self.h_ca_dte.len()
    }

    pub fn n_dte(&self) -> usize {
        self.h_ca_dte.first().map_or(0, |m| m.ncols())
    }
}

/// Equivalent downlink state for a DTE phase vector: per-user `H_e,k`, the
/// per-element slices `U_{k,m}`, and incremental updates when one phase
/// changes.
#[derive(Debug, Clone)]
pub struct EquivalentDownlink {
    /// Per user `N_UE x N_BS`.
    pub h_e: Vec<CMat>,
    /// `u[k][m]`: `N_UE x N_BS` contribution of DTE `m` to user `k`.
    pub u: Vec<Vec<CMat>>,
    pub phases: CVec,
}

impl EquivalentDownlink {
    /// Assemble `H_e,k = Σ_m φ_m U_{k,m} + (H_eq,k)^H` for all users.
    pub fn build(channels: &DownlinkChannels, phases: &CVec) -> Result<Self> {
        let n_dte = channels.n_dte();
        if phases.len() != n_dte {
            return Err(Error::dims(
                "EquivalentDownlink::build",
                format!("phase length {} != N_DTE {n_dte}", phases.len()),
            ));
        }
        let mut h_e = Vec::with_capacity(channels.users());
        let mut u_all = Vec::with_capacity(channels.users());
        for k in 0..channels.users() {
            let hca = &channels.h_ca_dte[k];
            let mut us = Vec::with_capacity(n_dte);
            let mut he = adjoint(&channels.h_eq_ste[k]);
            for m in 0..n_dte {
                let col = hca.column(m).to_owned();
                let mat = unvec(&col, channels.n_bs, channels.n_ue)?;
                let u_km = adjoint(&mat);
                he.zip_mut_with(&u_km, |a, &b| *a += phases[m] * b);
                us.push(u_km);
            }
            h_e.push(he);
            u_all.push(us);
        }
        Ok(EquivalentDownlink {
            h_e,
            u: u_all,
            phases: phases.clone(),
        })
    }

    /// Residual `T_k = H_e,k - φ_m U_{k,m}` for element `m`.
    pub fn t_of(&self, k: usize, m: usize) -> CMat {
        let mut t = self.h_e[k].clone();
        t.zip_mut_with(&self.u[k][m], |a, &b| *a -= self.phases[m] * b);
        t
    }

    /// Replace phase `m` and update every user's `H_e` incrementally.
    pub fn set_phase(&mut self, m: usize, phi: C64) {
        let delta = phi - self.phases[m];
        if delta.norm() == 0.0 {
            return;
        }
        for k in 0..self.h_e.len() {
            let u = &self.u[k][m];
            self.h_e[k].zip_mut_with(u, |a, &b| *a += delta * b);
        }
        self.phases[m] = phi;
    }
}

/// Per-user effective data rate (bits/s/Hz):
/// `(1 - T_tra/T_tot) log2 |I + V_k^H H_e,k^H Λ_k^{-1} H_e,k V_k|`.
pub fn effective_rate(
    h_e: &[CMat],
    precoder: &CMat,
    streams: usize,
    sigma_d_sq: f64,
    t_tra: usize,
    t_tot: usize,
) -> Result<Vec<f64>> {
    let users = h_e.len();
    let prefactor = (1.0 - t_tra as f64 / t_tot as f64).max(0.0);
    let mut rates = Vec::with_capacity(users);
    for k in 0..users {
        let n_ue = h_e[k].nrows();
        let hv: Vec<CMat> = (0..users)
            .map(|i| {
                let vi = precoder.slice(ndarray::s![.., i * streams..(i + 1) * streams]);
                h_e[k].dot(&vi)
            })
            .collect();
        let mut lambda = eye(n_ue).mapv(|z| z * sigma_d_sq);
        for (i, hvi) in hv.iter().enumerate() {
            if i == k {
                continue;
            }
            lambda = lambda + hvi.dot(&adjoint(hvi));
        }
        let x = decomp::solve_hermitian(&lambda, &hv[k])?;
        let m = eye(streams) + adjoint(&hv[k]).dot(&x);
        let ld = decomp::logdet_hermitian(&m)?;
        rates.push(prefactor * ld / std::f64::consts::LN_2);
    }
    Ok(rates)
}

/// MMSE receivers, their MSE matrices and the inverse-MSE weights.
///
/// `W_k = (Σ_i H_k V_i V_i^H H_k^H + σ² I)^{-1} H_k V_k`, `Υ_k = E_k^{-1}`.
pub fn wmmse_update_receivers(
    h_e: &[CMat],
    precoder: &CMat,
    streams: usize,
    sigma_d_sq: f64,
) -> Result<(Vec<CMat>, Vec<CMat>, Vec<CMat>)> {
    let users = h_e.len();
    let mut combiners = Vec::with_capacity(users);
    let mut weights = Vec::with_capacity(users);
    let mut mses = Vec::with_capacity(users);
    for k in 0..users {
        let n_ue = h_e[k].nrows();
        let mut cov = eye(n_ue).mapv(|z| z * sigma_d_sq);
        let mut hv_k = CMat::zeros((n_ue, streams));
        for i in 0..users {
            let vi = precoder.slice(ndarray::s![.., i * streams..(i + 1) * streams]);
            let hvi = h_e[k].dot(&vi);
            cov = cov + hvi.dot(&adjoint(&hvi));
            if i == k {
                hv_k = hvi;
            }
        }
        let w = if sigma_d_sq > 0.0 {
            decomp::solve_hermitian(&cov, &hv_k)?
        } else {
            // Noise-free covariance may be singular; fall back to a
            // trace-scaled ridge.
            let tr: f64 = (0..n_ue).map(|i| cov[(i, i)].re).sum();
            let ridged = &cov + &eye(n_ue).mapv(|z| z * (1e-12 * tr.max(f64::MIN_POSITIVE)));
            decomp::solve_hermitian(&ridged, &hv_k)?
        };
        let e = mse_matrix(&w, &cov, &hv_k, streams);
        let upsilon = invert_hermitian_ridged(&e)?;
        combiners.push(w);
        weights.push(upsilon);
        mses.push(e);
    }
    Ok((combiners, weights, mses))
}

/// `E_k = I - W^H (H V_k) - (H V_k)^H W + W^H J W` with `J` the full
/// received-signal covariance.
fn mse_matrix(w: &CMat, cov: &CMat, hv_k: &CMat, streams: usize) -> CMat {
    let whv = adjoint(w).dot(hv_k);
    let mut e = eye(streams);
    e = e - &whv;
    e = e - adjoint(&whv);
    e + adjoint(w).dot(&cov.dot(w))
}

fn invert_hermitian_ridged(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    match decomp::solve_hermitian(a, &eye(n)) {
        Ok(inv) => Ok(inv),
        Err(_) => {
            let tr: f64 = (0..n).map(|i| a[(i, i)].re).sum();
            let ridged = a + &eye(n).mapv(|z| z * (1e-12 * tr.max(f64::MIN_POSITIVE)));
            decomp::solve_hermitian(&ridged, &eye(n)).map_err(|_| Error::Singular("MSE matrix"))
        }
    }
}

/// WMMSE objective `Σ_k tr(Υ_k E_k) - ln|Υ_k|` at the current variables.
pub fn wmmse_cost(
    h_e: &[CMat],
    precoder: &CMat,
    combiners: &[CMat],
    weights: &[CMat],
    streams: usize,
    sigma_d_sq: f64,
) -> Result<f64> {
    let users = h_e.len();
    let mut cost = 0.0;
    for k in 0..users {
        let n_ue = h_e[k].nrows();
        let mut cov = eye(n_ue).mapv(|z| z * sigma_d_sq);
        let mut hv_k = CMat::zeros((n_ue, streams));
        for i in 0..users {
            let vi = precoder.slice(ndarray::s![.., i * streams..(i + 1) * streams]);
            let hvi = h_e[k].dot(&vi);
            cov = cov + hvi.dot(&adjoint(&hvi));
            if i == k {
                hv_k = hvi;
            }
        }
        let e = mse_matrix(&combiners[k], &cov, &hv_k, streams);
        let ue = weights[k].dot(&e);
        let tr: f64 = (0..streams).map(|i| ue[(i, i)].re).sum();
        cost += tr - hermitian_logdet_signed(&weights[k])?;
    }
    Ok(cost)
}

fn hermitian_logdet_signed(a: &CMat) -> Result<f64> {
    decomp::logdet_hermitian(a).map_err(|_| Error::Singular("weight matrix"))
}

/// Closed-form precoder update with a water-filling multiplier found by
/// bisection so that `tr(V V^H) <= P_b` is tight (or `μ = 0` if feasible).
pub fn wmmse_update_precoder(
    h_e: &[CMat],
    combiners: &[CMat],
    weights: &[CMat],
    streams: usize,
    power_budget: f64,
) -> Result<CMat> {
    let users = h_e.len();
    let n_bs = h_e[0].ncols();
    let mut a = CMat::zeros((n_bs, n_bs));
    let mut rhs = CMat::zeros((n_bs, streams * users));
    for k in 0..users {
        let hw = adjoint(&h_e[k]).dot(&combiners[k]); // N_BS x Ns
        let hwu = hw.dot(&weights[k]);
        a = a + hwu.dot(&adjoint(&hw));
        rhs.slice_mut(ndarray::s![.., k * streams..(k + 1) * streams])
            .assign(&hwu);
    }

    let power_of = |mu: f64| -> Option<f64> {
        let lhs = &a + &eye(n_bs).mapv(|z| z * mu);
        decomp::solve_hermitian(&lhs, &rhs)
            .ok()
            .map(|v| v.iter().map(|z| z.norm_sqr()).sum())
    };

    // μ = 0 feasible?
    if let Some(p0) = power_of(0.0) {
        if p0 <= power_budget {
            let lhs = a.clone();
            return decomp::solve_hermitian(&lhs, &rhs);
        }
    }
    // Bracket: grow μ until the power drops below the budget.
    let tr_a: f64 = (0..n_bs).map(|i| a[(i, i)].re).sum();
    let mut hi = (tr_a / n_bs as f64).max(f64::MIN_POSITIVE);
    let mut found = false;
    for _ in 0..400 {
        match power_of(hi) {
            Some(p) if p < power_budget => {
                found = true;
                break;
            }
            _ => hi *= 4.0,
        }
    }
    if !found {
        return Err(Error::BisectionBracket);
    }
    let mut lo = 0.0f64;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        let p = power_of(mid).unwrap_or(f64::INFINITY);
        if (p - power_budget).abs() <= 1e-10 * power_budget.max(1.0) {
            hi = mid;
            break;
        }
        if p > power_budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let _ = lo;
    let lhs = &a + &eye(n_bs).mapv(|z| z * hi);
    decomp::solve_hermitian(&lhs, &rhs)
}

/// One full element-iteration sweep over the DTE phases.
///
/// For each element the phase coefficient
/// `c_m = Σ_k tr(Υ_k W_k^H T_k V V^H U_{k,m}^H W_k - Υ_k V_k^H U_{k,m}^H W_k)`
/// is computed, the unconstrained optimum is `-c_m/|c_m|`, and the phase from
/// the alphabet minimizing `Re{c_m φ*}` is selected (`None` = continuous).
pub fn ei_update_dte_phases(
    state: &mut EquivalentDownlink,
    combiners: &[CMat],
    weights: &[CMat],
    precoder: &CMat,
    streams: usize,
    alphabet: Option<&[C64]>,
) {
    let users = state.h_e.len();
    let n_dte = state.phases.len();
    if n_dte == 0 {
        return;
    }
    let vvh = precoder.dot(&adjoint(precoder));
    // Per-sweep constants.
    let d1: Vec<CMat> = (0..users)
        .map(|k| {
            combiners[k]
                .dot(&weights[k])
                .dot(&adjoint(&combiners[k]))
        })
        .collect();
    let d2: Vec<CMat> = (0..users)
        .map(|k| {
            let vk = precoder.slice(ndarray::s![.., k * streams..(k + 1) * streams]);
            combiners[k].dot(&weights[k]).dot(&adjoint(&vk.to_owned()))
        })
        .collect();

    for m in 0..n_dte {
        let mut c = Complex::new(0.0, 0.0);
        for k in 0..users {
            let t = state.t_of(k, m);
            let tm = t.dot(&vvh); // N_UE x N_BS
            let d1t = d1[k].dot(&tm);
            // tr(D1 T M U^H) = <U, D1 T M>_F
            c += fro_inner(&state.u[k][m], &d1t);
            // tr(W Υ V_k^H U^H) = <U, W Υ V_k^H>_F
            c -= fro_inner(&state.u[k][m], &d2[k]);
        }
        if c.norm() == 0.0 {
            continue; // tie: keep the current phase
        }
        let new_phase = match alphabet {
            None => -c / c.norm(),
            Some(set) => {
                let mut best = state.phases[m];
                let mut best_val = f64::INFINITY;
                for &f in set {
                    let val = (c * f.conj()).re;
                    if val < best_val {
                        best_val = val;
                        best = f;
                    }
                }
                best
            }
        };
        state.set_phase(m, new_phase);
    }
}

/// Options for [`wmmse_ei`].
#[derive(Debug, Clone)]
pub struct WmmseOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Streams per user.
    pub streams: usize,
    /// Discrete DTE alphabet; `None` means continuous phases.
    pub alphabet: Option<Vec<C64>>,
    /// With a discrete alphabet, run this many continuous-phase iterations
    /// first and start the discrete sweep from the quantized result. Greedy
    /// per-element updates from a cold start settle in poor sign patterns;
    /// the relaxation picks the basin.
    pub warmup_iters: usize,
}

impl Default for WmmseOptions {
    fn default() -> Self {
        WmmseOptions {
            max_iters: 60,
            rel_tol: 1e-6,
            streams: 1,
            alphabet: None,
            warmup_iters: 0,
        }
    }
}

/// The converged beamforming variables and their traces.
#[derive(Debug, Clone)]
pub struct BeamformingSolution {
    /// STE phases the channels were built with (copied through for dumps).
    pub omega: CVec,
    /// Final DTE phases.
    pub dte_phases: CVec,
    /// `N_BS x Ns K` BS precoder.
    pub precoder: CMat,
    pub combiners: Vec<CMat>,
    pub weights: Vec<CMat>,
    /// WMMSE cost after every block update (4 entries per iteration).
    pub cost_trace: Vec<f64>,
    /// Sum rate (no training prefactor) after each full iteration.
    pub rate_trace: Vec<f64>,
    pub iterations: usize,
}

impl BeamformingSolution {
    pub fn transmit_power(&self) -> f64 {
        self.precoder.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Alternate the four WMMSE-EI block updates until the cost stalls.
///
/// `omega` is carried through to the solution record; the channels must have
/// been built with the same STE configuration.
pub fn wmmse_ei(
    channels: &DownlinkChannels,
    omega: &CVec,
    sigma_d_sq: f64,
    power_budget: f64,
    opts: &WmmseOptions,
) -> Result<BeamformingSolution> {
    let users = channels.users();
    if users == 0 {
        return Err(Error::Empty("no users"));
    }
    let streams = opts.streams;
    let n_dte = channels.n_dte();
    let init_phase = opts
        .alphabet
        .as_ref()
        .and_then(|a| a.first().copied())
        .unwrap_or(ONE);
    let phases = CVec::from_elem(n_dte, init_phase);
    let mut state = EquivalentDownlink::build(channels, &phases)?;

    // Matched-filter style start scaled to the power budget.
    let n_bs = channels.n_bs;
    let mut precoder = CMat::zeros((n_bs, streams * users));
    for k in 0..users {
        let hk = &state.h_e[k];
        let hkh = adjoint(hk);
        for s_idx in 0..streams {
            let col = hkh.column(s_idx % hkh.ncols()).to_owned();
            precoder
                .slice_mut(ndarray::s![.., k * streams + s_idx])
                .assign(&col);
        }
    }
    let pw: f64 = precoder.iter().map(|z| z.norm_sqr()).sum();
    if pw > 0.0 {
        let scale = (power_budget / pw).sqrt();
        precoder.mapv_inplace(|z| z * scale);
    }

    let mut combiners;
    let mut weights;
    let mut cost_trace = Vec::new();
    let mut rate_trace = Vec::new();
    let mut prev_cost = f64::INFINITY;
    let mut iterations = 0;

    // Initial receivers/weights so every later update is well-defined.
    let (w0, u0, _) = wmmse_update_receivers(&state.h_e, &precoder, streams, sigma_d_sq)?;
    combiners = w0;
    weights = u0;

    // Continuous relaxation warmup, then snap each phase to the alphabet.
    if let Some(alpha) = opts.alphabet.as_deref() {
        if n_dte > 0 && opts.warmup_iters > 0 {
            for _ in 0..opts.warmup_iters {
                let (w_new, _, _) =
                    wmmse_update_receivers(&state.h_e, &precoder, streams, sigma_d_sq)?;
                combiners = w_new;
                let (_, u_new, _) =
                    wmmse_update_receivers(&state.h_e, &precoder, streams, sigma_d_sq)?;
                weights = u_new;
                precoder =
                    wmmse_update_precoder(&state.h_e, &combiners, &weights, streams, power_budget)?;
                ei_update_dte_phases(&mut state, &combiners, &weights, &precoder, streams, None);
            }
            for m in 0..n_dte {
                let current = state.phases[m];
                let snapped = alpha
                    .iter()
                    .copied()
                    .min_by(|a, b| {
                        (a - current)
                            .norm()
                            .partial_cmp(&(b - current).norm())
                            .unwrap()
                    })
                    .unwrap_or(current);
                state.set_phase(m, snapped);
            }
            let (w_new, u_new, _) =
                wmmse_update_receivers(&state.h_e, &precoder, streams, sigma_d_sq)?;
            combiners = w_new;
            weights = u_new;
        }
    }

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        // W update (Υ fixed).
        let (w_new, _, _) = wmmse_update_receivers(&state.h_e, &precoder, streams, sigma_d_sq)?;
        combiners = w_new;
        cost_trace.push(wmmse_cost(
            &state.h_e, &precoder, &combiners, &weights, streams, sigma_d_sq,
        )?);
        // Υ update.
        let (_, u_new, _) = wmmse_update_receivers(&state.h_e, &precoder, streams, sigma_d_sq)?;
        weights = u_new;
        cost_trace.push(wmmse_cost(
            &state.h_e, &precoder, &combiners, &weights, streams, sigma_d_sq,
        )?);
        // V update.
        precoder = wmmse_update_precoder(&state.h_e, &combiners, &weights, streams, power_budget)?;
        cost_trace.push(wmmse_cost(
            &state.h_e, &precoder, &combiners, &weights, streams, sigma_d_sq,
        )?);
        // Φ_d sweep.
        ei_update_dte_phases(
            &mut state,
            &combiners,
            &weights,
            &precoder,
            streams,
            opts.alphabet.as_deref(),
        );
        let cost = wmmse_cost(
            &state.h_e, &precoder, &combiners, &weights, streams, sigma_d_sq,
        )?;
        cost_trace.push(cost);

        let rates = effective_rate(&state.h_e, &precoder, streams, sigma_d_sq, 0, 1)?;
        rate_trace.push(rates.iter().sum());

        if !cost.is_finite() {
            return Err(Error::NonFinite("WMMSE cost"));
        }
        if (prev_cost - cost).abs() <= opts.rel_tol * cost.abs().max(f64::MIN_POSITIVE) {
            prev_cost = cost;
            break;
        }
        prev_cost = cost;
    }
    let _ = prev_cost;

    Ok(BeamformingSolution {
        omega: omega.clone(),
        dte_phases: state.phases.clone(),
        precoder,
        combiners,
        weights,
        cost_trace,
        rate_trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{small_cfg, synthesize_channels};
    use crate::linalg::{crand_phase, crandn_mat, fro_norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_channels(
        users: usize,
        n_bs: usize,
        n_ue: usize,
        n_dte: usize,
        rng: &mut ChaCha12Rng,
    ) -> DownlinkChannels {
        DownlinkChannels {
            h_ca_dte: (0..users)
                .map(|_| crandn_mat(rng, n_bs * n_ue, n_dte))
                .collect(),
            h_eq_ste: (0..users).map(|_| crandn_mat(rng, n_bs, n_ue)).collect(),
            n_bs,
            n_ue,
        }
    }

    #[test]
    fn equivalent_downlink_identity() {
        // H_e,k = φ_m U_{k,m} + T_k for every m, also after phase updates.
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let ch = random_channels(2, 4, 3, 5, &mut rng);
        let phases = CVec::from_shape_fn(5, |_| crand_phase(&mut rng));
        let mut state = EquivalentDownlink::build(&ch, &phases).unwrap();
        for m in 0..5 {
            for k in 0..2 {
                let t = state.t_of(k, m);
                let rebuilt = &t + &state.u[k][m].mapv(|z| z * state.phases[m]);
                assert!(fro_norm(&(&rebuilt - &state.h_e[k])) < 1e-12);
            }
        }
        state.set_phase(2, -state.phases[2]);
        for k in 0..2 {
            let t = state.t_of(k, 2);
            let rebuilt = &t + &state.u[k][2].mapv(|z| z * state.phases[2]);
            assert!(fro_norm(&(&rebuilt - &state.h_e[k])) < 1e-12);
        }
        // Against a from-scratch rebuild.
        let fresh = EquivalentDownlink::build(&ch, &state.phases).unwrap();
        for k in 0..2 {
            assert!(fro_norm(&(&fresh.h_e[k] - &state.h_e[k])) < 1e-12);
        }
    }

    #[test]
    fn equivalent_matches_channel_product() {
        // mat(H_ca φ*) + H_eq against the physical G Φ* H + G Ω H form.
        let cfg = small_cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(72);
        let ch = synthesize_channels(&cfg, &mut rng);
        let omega = CVec::from_shape_fn(cfg.n_ste(), |_| crand_phase(&mut rng));
        let dc = DownlinkChannels::from_true(&ch, &omega);
        let phases = CVec::from_shape_fn(cfg.n_dte(), |_| crand_phase(&mut rng));
        let state = EquivalentDownlink::build(&dc, &phases).unwrap();
        for k in 0..cfg.users {
            let mut hp = ch.h_dte[k].clone();
            for (mut row, w) in hp.rows_mut().into_iter().zip(phases.iter()) {
                row.mapv_inplace(|z| z * w.conj());
            }
            let downlink = ch.g_dte.dot(&hp) + ch.ste_equivalent(k, &omega);
            let expect = adjoint(&downlink);
            assert!(
                fro_norm(&(&expect - &state.h_e[k])) < 1e-12 * fro_norm(&expect).max(1e-30),
                "user {k}"
            );
        }
    }

    #[test]
    fn zero_precoder_zero_rate() {
        let mut rng = ChaCha12Rng::seed_from_u64(73);
        let ch = random_channels(2, 4, 3, 4, &mut rng);
        let phases = CVec::from_elem(4, ONE);
        let state = EquivalentDownlink::build(&ch, &phases).unwrap();
        let v = CMat::zeros((4, 2));
        let rates = effective_rate(&state.h_e, &v, 1, 1e-2, 100, 1500).unwrap();
        assert!(rates.iter().all(|&r| r == 0.0));
        // Full training time also kills the rate.
        let v2 = crandn_mat(&mut rng, 4, 2);
        let rates2 = effective_rate(&state.h_e, &v2, 1, 1e-2, 1500, 1500).unwrap();
        assert!(rates2.iter().all(|&r| r.abs() < 1e-12));
    }

    #[test]
    fn single_user_rate_is_scalar_snr_formula() {
        let mut rng = ChaCha12Rng::seed_from_u64(74);
        // Rank-1 channel: h_e = a b^H.
        let a = crandn_mat(&mut rng, 3, 1);
        let b = crandn_mat(&mut rng, 4, 1);
        let h_e = a.dot(&adjoint(&b));
        let v = crandn_mat(&mut rng, 4, 1);
        let sigma = 0.3;
        let rates = effective_rate(&[h_e.clone()], &v, 1, sigma, 300, 1500).unwrap();
        let hv = h_e.dot(&v);
        let snr = hv.iter().map(|z| z.norm_sqr()).sum::<f64>() / sigma;
        let expect = (1.0 - 0.2) * (1.0 + snr).log2();
        assert!((rates[0] - expect).abs() < 1e-10 * expect.max(1.0));
    }

    #[test]
    fn receivers_zero_precoder() {
        let mut rng = ChaCha12Rng::seed_from_u64(75);
        let ch = random_channels(2, 4, 3, 4, &mut rng);
        let phases = CVec::from_elem(4, ONE);
        let state = EquivalentDownlink::build(&ch, &phases).unwrap();
        let v = CMat::zeros((4, 2));
        let (w, u, e) = wmmse_update_receivers(&state.h_e, &v, 1, 0.5).unwrap();
        for k in 0..2 {
            assert!(fro_norm(&w[k]) == 0.0);
            assert!(fro_norm(&(&e[k] - &eye(1))) < 1e-12);
            assert!(fro_norm(&(&u[k] - &eye(1))) < 1e-12);
        }
    }

    #[test]
    fn mse_matches_direct_expectation() {
        // For Ns = N_UE = 1 the MSE expectation can be expanded by hand:
        // E = |1 - w* h v|² + |w|² (σ² + Σ_{i≠k} |h v_i|²).
        let mut rng = ChaCha12Rng::seed_from_u64(76);
        let h_e: Vec<CMat> = (0..2).map(|_| crandn_mat(&mut rng, 1, 4)).collect();
        let v = crandn_mat(&mut rng, 4, 2);
        let sigma = 1.0;
        let (w, _, e) = wmmse_update_receivers(&h_e, &v, 1, sigma).unwrap();
        for k in 0..2 {
            let hv_k = h_e[k].dot(&v.slice(ndarray::s![.., k..k + 1]).to_owned())[(0, 0)];
            let hv_other = h_e[k].dot(&v.slice(ndarray::s![.., 1 - k..2 - k]).to_owned())[(0, 0)];
            let wk = w[k][(0, 0)];
            let direct = (1.0 - (wk.conj() * hv_k).re) * (1.0 - (wk.conj() * hv_k).re)
                + (wk.conj() * hv_k).im * (wk.conj() * hv_k).im
                + wk.norm_sqr() * (sigma + hv_other.norm_sqr());
            assert!(
                (e[k][(0, 0)].re - direct).abs() < 1e-10 * direct.max(1.0),
                "user {k}: {} vs {direct}",
                e[k][(0, 0)].re
            );
        }
    }

    #[test]
    fn wmmse_cost_identity_at_optimal_weights() {
        // At Υ = E^{-1}: Σ tr(ΥE) - ln|Υ| = Σ (Ns + ln|E|).
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let ch = random_channels(2, 4, 3, 4, &mut rng);
        let phases = CVec::from_elem(4, ONE);
        let state = EquivalentDownlink::build(&ch, &phases).unwrap();
        let mut v = crandn_mat(&mut rng, 4, 2);
        let p: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        v.mapv_inplace(|z| z / p.sqrt());
        let (w, u, e) = wmmse_update_receivers(&state.h_e, &v, 1, 0.7).unwrap();
        let cost = wmmse_cost(&state.h_e, &v, &w, &u, 1, 0.7).unwrap();
        let mut expect = 0.0;
        for k in 0..2 {
            expect += 1.0 + decomp::logdet_hermitian(&e[k]).unwrap();
        }
        assert!((cost - expect).abs() < 1e-9 * expect.abs().max(1.0));
    }

    #[test]
    fn precoder_respects_power_budget() {
        let mut rng = ChaCha12Rng::seed_from_u64(78);
        for trial in 0..10 {
            let ch = random_channels(3, 6, 2, 4, &mut rng);
            let phases = CVec::from_elem(4, ONE);
            let state = EquivalentDownlink::build(&ch, &phases).unwrap();
            let budget = 2.5;
            // Feasible starting precoder (the update is only a conditional
            // minimizer over the power-constrained set).
            let mut v0 = crandn_mat(&mut rng, 6, 3);
            let p0: f64 = v0.iter().map(|z| z.norm_sqr()).sum();
            v0.mapv_inplace(|z| z * (budget / p0).sqrt() * 0.8);
            let (w, u, _) = wmmse_update_receivers(&state.h_e, &v0, 1, 0.4).unwrap();
            let v = wmmse_update_precoder(&state.h_e, &w, &u, 1, budget).unwrap();
            let p: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            assert!(p <= budget + 1e-9, "trial {trial}: power {p}");
            // The update cannot increase the cost for fixed W, Υ.
            let before = wmmse_cost(&state.h_e, &v0, &w, &u, 1, 0.4).unwrap();
            let after = wmmse_cost(&state.h_e, &v, &w, &u, 1, 0.4).unwrap();
            assert!(
                after <= before + 1e-9 * before.abs().max(1.0),
                "trial {trial}: {after} > {before}"
            );
        }
    }

    #[test]
    fn ei_continuous_phase_is_closed_form() {
        let mut rng = ChaCha12Rng::seed_from_u64(79);
        let ch = random_channels(2, 4, 2, 3, &mut rng);
        let phases = CVec::from_shape_fn(3, |_| crand_phase(&mut rng));
        let mut state = EquivalentDownlink::build(&ch, &phases).unwrap();
        let v = crandn_mat(&mut rng, 4, 2);
        let (w, u, _) = wmmse_update_receivers(&state.h_e, &v, 1, 0.6).unwrap();
        // Before/after cost comparison for the sweep.
        let before = wmmse_cost(&state.h_e, &v, &w, &u, 1, 0.6).unwrap();
        ei_update_dte_phases(&mut state, &w, &u, &v, 1, None);
        let after = wmmse_cost(&state.h_e, &v, &w, &u, 1, 0.6).unwrap();
        assert!(after <= before + 1e-9 * before.abs().max(1.0));
        for z in state.phases.iter() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ei_discrete_matches_exhaustive_search() {
        // Single DTE: the element update must agree with brute force over F.
        let mut rng = ChaCha12Rng::seed_from_u64(80);
        let alphabet = crate::channel::phase_set(2);
        for trial in 0..20 {
            let ch = random_channels(2, 3, 2, 1, &mut rng);
            let phases = CVec::from_elem(1, alphabet[0]);
            let mut state = EquivalentDownlink::build(&ch, &phases).unwrap();
            let v = crandn_mat(&mut rng, 3, 2);
            let (w, u, _) = wmmse_update_receivers(&state.h_e, &v, 1, 0.5).unwrap();
            ei_update_dte_phases(&mut state, &w, &u, &v, 1, Some(&alphabet));
            let chosen = state.phases[0];
            let cost_at = |f: crate::linalg::C64| {
                let mut s2 = EquivalentDownlink::build(&ch, &CVec::from_elem(1, f)).unwrap();
                s2.set_phase(0, f);
                wmmse_cost(&s2.h_e, &v, &w, &u, 1, 0.5).unwrap()
            };
            let chosen_cost = cost_at(chosen);
            for &f in &alphabet {
                assert!(
                    chosen_cost <= cost_at(f) + 1e-9,
                    "trial {trial}: phase {f} beats chosen {chosen}"
                );
            }
        }
    }

    #[test]
    fn wmmse_ei_cost_non_increasing_and_power_feasible() {
        let mut rng = ChaCha12Rng::seed_from_u64(81);
        let ch = random_channels(3, 6, 2, 5, &mut rng);
        let omega = CVec::zeros(0);
        let opts = WmmseOptions {
            alphabet: Some(crate::channel::phase_set(1)),
            max_iters: 25,
            ..WmmseOptions::default()
        };
        let sol = wmmse_ei(&ch, &omega, 0.5, 3.0, &opts).unwrap();
        for w in sol.cost_trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0),
                "cost increased: {w:?}"
            );
        }
        assert!(sol.transmit_power() <= 3.0 + 1e-9);
        for z in sol.dte_phases.iter() {
            assert!(
                crate::channel::phase_set(1)
                    .iter()
                    .any(|f| (f - z).norm() < 1e-12)
            );
        }
        // Converged sum rate at least the initial one.
        if sol.rate_trace.len() >= 2 {
            assert!(sol.rate_trace.last().unwrap() + 1e-9 >= sol.rate_trace[0]);
        }
    }

    #[test]
    fn matched_filter_recovered_for_single_user_rank_one() {
        // K=1, Ns=1, rank-1 channel, continuous phases: the optimal precoder
        // is the matched filter.
        let mut rng = ChaCha12Rng::seed_from_u64(82);
        let a = crandn_mat(&mut rng, 2, 1);
        let b = crandn_mat(&mut rng, 6, 1);
        let h_e = a.dot(&adjoint(&b)); // 2 x 6, rank 1
        let ch = DownlinkChannels {
            h_ca_dte: vec![CMat::zeros((12, 0))],
            h_eq_ste: vec![adjoint(&h_e)],
            n_bs: 6,
            n_ue: 2,
        };
        let omega = CVec::zeros(0);
        let sol = wmmse_ei(&ch, &omega, 0.1, 2.0, &WmmseOptions::default()).unwrap();
        // Matched filter direction is b (up to phase).
        let v = sol.precoder.column(0).to_owned();
        let num: crate::linalg::C64 = b.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum();
        let cos = num.norm()
            / (b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
                * v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
        assert!(cos > 0.999, "cosine similarity {cos}");
    }

    #[test]
    fn pure_ste_surface_reduces_to_plain_wmmse() {
        // N_DTE = 0: wmmse_ei must match a from-scratch WMMSE on H_eq alone.
        let mut rng = ChaCha12Rng::seed_from_u64(83);
        let users = 2;
        let n_bs = 4;
        let n_ue = 2;
        let heq: Vec<CMat> = (0..users).map(|_| crandn_mat(&mut rng, n_bs, n_ue)).collect();
        let ch = DownlinkChannels {
            h_ca_dte: (0..users).map(|_| CMat::zeros((n_bs * n_ue, 0))).collect(),
            h_eq_ste: heq.clone(),
            n_bs,
            n_ue,
        };
        let sigma = 0.2;
        let budget = 1.7;
        let opts = WmmseOptions {
            max_iters: 3000,
            rel_tol: 1e-13,
            ..WmmseOptions::default()
        };
        let sol = wmmse_ei(&ch, &CVec::zeros(0), sigma, budget, &opts).unwrap();
        let rates = effective_rate(
            &heq.iter().map(adjoint).collect::<Vec<_>>(),
            &sol.precoder,
            1,
            sigma,
            0,
            1,
        )
        .unwrap();
        let sum_rate: f64 = rates.iter().sum();

        // Independent textbook WMMSE (scalar streams) written from scratch.
        let h: Vec<CMat> = heq.iter().map(adjoint).collect();
        let mut v = CMat::zeros((n_bs, users));
        for k in 0..users {
            v.column_mut(k).assign(&adjoint(&h[k]).column(0));
        }
        let p0: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        v.mapv_inplace(|z| z * (budget / p0).sqrt());
        for _ in 0..3000 {
            // MMSE receivers and weights.
            let mut ws = Vec::new();
            let mut us = Vec::new();
            for k in 0..users {
                let mut cov = eye(n_ue).mapv(|z| z * sigma);
                for i in 0..users {
                    let hv = h[k].dot(&v.column(i).to_owned());
                    for a in 0..n_ue {
                        for b in 0..n_ue {
                            cov[(a, b)] += hv[a] * hv[b].conj();
                        }
                    }
                }
                let hvk = h[k].dot(&v.column(k).to_owned());
                let rhs = CMat::from_shape_fn((n_ue, 1), |(i, _)| hvk[i]);
                let w = decomp::solve_hermitian(&cov, &rhs).unwrap();
                let mut e = 1.0;
                let wh: crate::linalg::C64 =
                    w.column(0).iter().zip(hvk.iter()).map(|(a, b)| a.conj() * b).sum();
                e -= 2.0 * wh.re;
                let cw = cov.dot(&w);
                let quad: crate::linalg::C64 =
                    w.column(0).iter().zip(cw.column(0).iter()).map(|(a, b)| a.conj() * b).sum();
                e += quad.re;
                ws.push(w);
                us.push(1.0 / e);
            }
            // Precoder with bisection.
            let mut amat = CMat::zeros((n_bs, n_bs));
            let mut rhs = CMat::zeros((n_bs, users));
            for k in 0..users {
                let hw = adjoint(&h[k]).dot(&ws[k]);
                for a in 0..n_bs {
                    for b in 0..n_bs {
                        amat[(a, b)] += hw[(a, 0)] * hw[(b, 0)].conj() * us[k];
                    }
                    rhs[(a, k)] = hw[(a, 0)] * us[k];
                }
            }
            let power = |mu: f64| -> Option<f64> {
                let lhs = &amat + &eye(n_bs).mapv(|z| z * mu);
                decomp::solve_hermitian(&lhs, &rhs)
                    .ok()
                    .map(|x| x.iter().map(|z| z.norm_sqr()).sum())
            };
            let mut mu = 0.0;
            if power(0.0).map_or(true, |p| p > budget) {
                let mut lo = 0.0;
                let mut hi = 1.0;
                while power(hi).map_or(true, |p| p > budget) {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if power(mid).map_or(true, |p| p > budget) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                mu = hi;
            }
            let lhs = &amat + &eye(n_bs).mapv(|z| z * mu);
            v = decomp::solve_hermitian(&lhs, &rhs).unwrap();
        }
        let oracle_rates = effective_rate(&h, &v, 1, sigma, 0, 1).unwrap();
        let oracle: f64 = oracle_rates.iter().sum();
        assert!(
            (sum_rate - oracle).abs() <= 1e-8 * oracle.max(1.0),
            "wmmse_ei {sum_rate} vs oracle {oracle}"
        );
    }
}
