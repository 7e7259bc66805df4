//! DTE-STE decoupled channel estimation by nested alternating manifold
//! optimization (DSD-MO), plus the robust rank selection rule.
//!
//! Per user, three components are estimated from one pilot block: the
//! DTE-side factors `Ĝ_DTE` (rank `P̂`) and `Ĥ_DTE` (rank `Q̂`), and the STE
//! equivalent channel `Ĥeq` (rank `min{P̂, Q̂}`). The outer iteration updates
//! `Ĥeq` with the DTE factors fixed; the inner iteration alternates `Ĝ_DTE`
//! and `Ĥ_DTE` with `Ĥeq` fixed. Every block update runs a Riemannian CG on
//! the matching fixed-rank manifold, so the objective never increases.

pub mod lemma;
pub mod objective;

pub use lemma::{ls_overall_cascaded, measurement_matrix, LsDiagnostic};
pub use objective::{
    balance_weights, dsd_objective, grad_g_dte, grad_h_dte, grad_h_eq_ste, GradientWorkspace,
    RegWeights, UserProblem,
};

use ndarray::s;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::channel::{Dictionaries, PilotBlock};
use crate::error::{Error, Result};
use crate::linalg::{adjoint, decomp, eye, khatri_rao, CMat};
use crate::manifold::{riemannian_cg, CgOptions, FixedRankManifold, FixedRankPoint, Problem};
use crate::seeding;

/// Solver options for [`estimate_dsd_mo`].
#[derive(Debug, Clone)]
pub struct EstimationOptions {
    /// Assumed rank of `Ĝ_DTE` (path count of the IRS-BS channel).
    pub rank_g: usize,
    /// Assumed rank of `Ĥ_DTE` (path count of the UE-IRS channel).
    pub rank_h: usize,
    /// Explicit regularization weights; `None` auto-balances at init.
    pub weights: Option<RegWeights>,
    /// Multiplier for the auto-balanced DTE factor weights.
    pub weight_scale: f64,
    /// Multiplier for the auto-balanced STE row/column weights.
    pub weight_scale_ste: f64,
    pub inner_tol: f64,
    pub inner_max: usize,
    pub outer_tol: f64,
    pub outer_max: usize,
    /// Conjugate-gradient options shared by all three block updates.
    pub cg: CgOptions,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions {
            rank_g: 3,
            rank_h: 3,
            weights: None,
            weight_scale: 1e-2,
            weight_scale_ste: 1e-3,
            inner_tol: 1e-6,
            inner_max: 20,
            outer_tol: 1e-7,
            outer_max: 50,
            cg: CgOptions::default(),
        }
    }
}

impl EstimationOptions {
    /// Rank of the STE equivalent channel, `min{P̂, Q̂}`.
    pub fn rank_eq(&self) -> usize {
        self.rank_g.min(self.rank_h)
    }
}

/// Everything [`estimate_dsd_mo`] needs: observed per-user pilot blocks,
/// dictionaries, and solver options.
pub struct EstimationProblem<'a> {
    pub blocks: &'a [PilotBlock],
    pub dict: &'a Dictionaries,
    pub options: EstimationOptions,
}

/// One user's estimates and diagnostics.
#[derive(Debug, Clone)]
pub struct UserEstimate {
    pub g_dte: CMat,
    pub h_dte: CMat,
    pub h_eq_ste: CMat,
    /// `Ĥ_DTE^T ⊙ Ĝ_DTE`, the DTE cascaded channel estimate.
    pub h_ca_dte: CMat,
    /// Full objective value per outer iteration (index 0 = initialization).
    pub objective_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub users: Vec<UserEstimate>,
    /// `(P̂, Q̂, rank of Ĥeq)` used by the solver.
    pub ranks: (usize, usize, usize),
}

// --- Block-update sub-problems -------------------------------------------

/// `min ||Ĝ X + B||² + υ_G |λ_G|_1` over the rank-P̂ manifold, with
/// `X = Φ ∘ (Ĥ S)` and `B = Ĥeq S - R` fixed.
struct GStage<'a, 'b> {
    prob: &'a UserProblem<'b>,
    x: CMat,
    b: CMat,
}

impl Problem<FixedRankManifold> for GStage<'_, '_> {
    fn cost(&self, p: &FixedRankPoint) -> f64 {
        let g = p.to_matrix();
        let e = g.dot(&self.x) + &self.b;
        e.iter().map(|z| z.norm_sqr()).sum::<f64>() + objective::reg_cost_g(self.prob, &g)
    }
    fn euclidean_grad(&self, p: &FixedRankPoint) -> CMat {
        let g = p.to_matrix();
        let e = g.dot(&self.x) + &self.b;
        let mut grad = e.dot(&adjoint(&self.x));
        objective::add_reg_grad_g(self.prob, &g, &mut grad);
        grad.mapv(|z| z * 2.0)
    }
}

/// `min ||Ĝ (Φ ∘ (Ĥ S)) + B||² + υ_H |λ_H|_1` over the rank-Q̂ manifold.
struct HStage<'a, 'b> {
    prob: &'a UserProblem<'b>,
    g: CMat,
    b: CMat,
}

impl Problem<FixedRankManifold> for HStage<'_, '_> {
    fn cost(&self, p: &FixedRankPoint) -> f64 {
        let h = p.to_matrix();
        let mut x = h.dot(self.prob.pilots);
        x.zip_mut_with(self.prob.dte_phases, |v, &q| *v *= q);
        let e = self.g.dot(&x) + &self.b;
        e.iter().map(|z| z.norm_sqr()).sum::<f64>() + objective::reg_cost_h(self.prob, &h)
    }
    fn euclidean_grad(&self, p: &FixedRankPoint) -> CMat {
        let h = p.to_matrix();
        let mut x = h.dot(self.prob.pilots);
        x.zip_mut_with(self.prob.dte_phases, |v, &q| *v *= q);
        let e = self.g.dot(&x) + &self.b;
        let mut ge = adjoint(&self.g).dot(&e);
        ge.zip_mut_with(self.prob.dte_phases, |v, &q| *v *= q.conj());
        let mut grad = ge.dot(&adjoint(self.prob.pilots));
        objective::add_reg_grad_h(self.prob, &h, &mut grad);
        grad.mapv(|z| z * 2.0)
    }
}

/// `min ||Ĥeq S + C||² + row/col l1 terms` over the rank-min{P̂,Q̂} manifold,
/// with `C = Ĝ (Φ ∘ (Ĥ S)) - R` fixed.
struct EqStage<'a, 'b> {
    prob: &'a UserProblem<'b>,
    c: CMat,
}

impl Problem<FixedRankManifold> for EqStage<'_, '_> {
    fn cost(&self, p: &FixedRankPoint) -> f64 {
        let heq = p.to_matrix();
        let e = heq.dot(self.prob.pilots) + &self.c;
        e.iter().map(|z| z.norm_sqr()).sum::<f64>() + objective::reg_cost_eq(self.prob, &heq)
    }
    fn euclidean_grad(&self, p: &FixedRankPoint) -> CMat {
        let heq = p.to_matrix();
        let e = heq.dot(self.prob.pilots) + &self.c;
        let mut grad = e.dot(&adjoint(self.prob.pilots));
        objective::add_reg_grad_eq(self.prob, &heq, &mut grad);
        grad.mapv(|z| z * 2.0)
    }
}

// --- Algorithm driver ------------------------------------------------------

/// Run the DSD-MO estimator for every user in the problem.
///
/// Per-user sub-problems are independent; each derives its own random
/// initialization stream from `base_seed` and the block's user index, so the
/// result is invariant to the order of the blocks.
pub fn estimate_dsd_mo(problem: &EstimationProblem, base_seed: u64) -> Result<EstimationResult> {
    let opts = &problem.options;
    let mut users = Vec::with_capacity(problem.blocks.len());
    for block in problem.blocks {
        users.push(estimate_user(block, problem.dict, opts, base_seed)?);
    }
    Ok(EstimationResult {
        users,
        ranks: (opts.rank_g, opts.rank_h, opts.rank_eq()),
    })
}

fn estimate_user(
    block: &PilotBlock,
    dict: &Dictionaries,
    opts: &EstimationOptions,
    base_seed: u64,
) -> Result<UserEstimate> {
    let received = block.received()?;
    let pilots = &block.pilots;
    let t_len = block.t_len();
    if t_len == 0 {
        return Err(Error::Empty("pilot block with T = 0"));
    }
    let n_bs = received.nrows();
    let n_dte = block.dte_phases.nrows();
    let n_ue = pilots.nrows();
    let with_ste = !block.ste_phases.is_empty();

    let rank_g = opts.rank_g.min(n_bs.min(n_dte)).max(1);
    let rank_h = opts.rank_h.min(n_dte.min(n_ue)).max(1);
    let rank_eq = rank_g.min(rank_h).min(n_bs.min(n_ue));

    let mut rng = ChaCha12Rng::seed_from_u64(seeding::derive(base_seed, block.user as u64));

    // Initialization: Ĥeq by rank-truncated LS on the received pilots
    // (the zero-mean DTE training phases average the DTE term out), the DTE
    // factors as random rank-P̂/Q̂ points scaled to the residual energy.
    let heq0 = if with_ste {
        Some(ls_rank_truncated(received, pilots, rank_eq)?)
    } else {
        None
    };
    let heq0_mat = heq0
        .as_ref()
        .map(|p| p.to_matrix())
        .unwrap_or_else(|| CMat::zeros((n_bs, n_ue)));

    let mut g_pt = FixedRankPoint::random(&mut rng, n_bs, n_dte, rank_g);
    let mut h_pt = FixedRankPoint::random(&mut rng, n_dte, n_ue, rank_h);
    {
        let resid0 = {
            let e = heq0_mat.dot(pilots) - received;
            e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
        };
        let mut x = h_pt.to_matrix().dot(pilots);
        x.zip_mut_with(&block.dte_phases, |v, &q| *v *= q);
        let pred = {
            let p = g_pt.to_matrix().dot(&x);
            p.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
        };
        let scale = (resid0 / pred.max(f64::MIN_POSITIVE)).sqrt();
        g_pt = g_pt.scaled(scale);
        h_pt = h_pt.scaled(scale);
    }
    let mut g_mat = g_pt.to_matrix();
    let mut h_mat = h_pt.to_matrix();
    let mut heq_pt = heq0;
    let mut heq_mat = heq0_mat;

    // Regularization weights, auto-balanced once at initialization.
    let weights = match opts.weights {
        Some(w) => w,
        None => {
            let probe = UserProblem {
                pilots,
                received,
                dte_phases: &block.dte_phases,
                dict,
                weights: RegWeights::default(),
            };
            balance_weights(
                &probe,
                &g_mat,
                &h_mat,
                &heq_mat,
                opts.weight_scale,
                opts.weight_scale_ste,
                with_ste,
            )
        }
    };
    let prob = UserProblem {
        pilots,
        received,
        dte_phases: &block.dte_phases,
        dict,
        weights,
    };

    let man_g = FixedRankManifold::new(n_bs, n_dte, rank_g);
    let man_h = FixedRankManifold::new(n_dte, n_ue, rank_h);
    let man_eq = FixedRankManifold::new(n_bs, n_ue, rank_eq);

    let mut f = dsd_objective(&prob, &g_mat, &h_mat, &heq_mat);
    if !f.is_finite() {
        return Err(Error::NonFinite("initial estimation objective"));
    }
    let mut trace = vec![f];
    let mut inner_total = 0usize;
    let mut outer_done = 0usize;

    for _outer in 0..opts.outer_max {
        // STE block: update Ĥeq with the DTE factors fixed.
        if let Some(pt) = heq_pt.take() {
            let mut x = h_mat.dot(pilots);
            x.zip_mut_with(&block.dte_phases, |v, &q| *v *= q);
            let c = g_mat.dot(&x) - received;
            let stage = EqStage { prob: &prob, c };
            let (new_pt, _) = riemannian_cg(&man_eq, &stage, pt, &opts.cg)?;
            heq_mat = new_pt.to_matrix();
            heq_pt = Some(new_pt);
        }

        // Inner alternation over the DTE factors.
        let mut f_inner = dsd_objective(&prob, &g_mat, &h_mat, &heq_mat);
        for _inner in 0..opts.inner_max {
            inner_total += 1;
            let b = heq_mat.dot(pilots) - received;
            {
                let mut x = h_mat.dot(pilots);
                x.zip_mut_with(&block.dte_phases, |v, &q| *v *= q);
                let stage = GStage {
                    prob: &prob,
                    x,
                    b: b.clone(),
                };
                let (new_pt, _) = riemannian_cg(&man_g, &stage, g_pt, &opts.cg)?;
                g_mat = new_pt.to_matrix();
                g_pt = new_pt;
            }
            {
                let stage = HStage {
                    prob: &prob,
                    g: g_mat.clone(),
                    b,
                };
                let (new_pt, _) = riemannian_cg(&man_h, &stage, h_pt, &opts.cg)?;
                h_mat = new_pt.to_matrix();
                h_pt = new_pt;
            }
            let f_new = dsd_objective(&prob, &g_mat, &h_mat, &heq_mat);
            let drop = f_inner - f_new;
            f_inner = f_new;
            if drop <= opts.inner_tol * f_inner.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }

        outer_done += 1;
        let f_new = f_inner;
        trace.push(f_new);
        let drop = f - f_new;
        f = f_new;
        if drop <= opts.outer_tol * f.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }

    let residual_norm = {
        let e = objective::residual(&prob, &g_mat, &h_mat, &heq_mat);
        e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    };
    let h_ca_dte = khatri_rao(&h_mat.t().to_owned(), &g_mat)?;
    Ok(UserEstimate {
        g_dte: g_mat,
        h_dte: h_mat,
        h_eq_ste: heq_mat,
        h_ca_dte,
        objective_trace: trace,
        outer_iterations: outer_done,
        inner_iterations: inner_total,
        residual_norm,
    })
}

/// Least-squares fit `Ĥeq = R S^H (S S^H)^{-1}` truncated to rank `m`.
fn ls_rank_truncated(received: &CMat, pilots: &CMat, m: usize) -> Result<FixedRankPoint> {
    let n_ue = pilots.nrows();
    let gram = pilots.dot(&adjoint(pilots));
    let trace: f64 = (0..n_ue).map(|i| gram[(i, i)].re).sum();
    let ridge = 1e-12 * trace.max(f64::MIN_POSITIVE) / n_ue as f64;
    let gram = gram + eye(n_ue).mapv(|z| z * ridge);
    let rhs = pilots.dot(&adjoint(received)); // S R^H
    let x = decomp::solve_hermitian(&gram, &rhs)?; // (SS^H)^{-1} S R^H
    let heq = adjoint(&x);
    FixedRankPoint::from_matrix(&heq, m)
}

// --- Rank selection --------------------------------------------------------

/// The robust rank selection rule: add a safety margin to the estimated
/// rank, clamped by the matrix dimensions.
pub fn select_rank(estimated_rank: usize, margin: usize, dims: (usize, usize)) -> usize {
    (estimated_rank + margin).min(dims.0.min(dims.1))
}

/// Rank-`m` representative of `H`: if `rank(H) <= m`, a rank-`m` matrix
/// within `eps` of `H` (singular-value inflation); otherwise the best rank-`m`
/// approximation. Returns the matrix and the achieved distance `||H - H̃||`.
pub fn nearest_fixed_rank(h: &CMat, m: usize, eps: f64) -> Result<(CMat, f64)> {
    let (n1, n2) = h.dim();
    if m == 0 || m > n1.min(n2) {
        return Err(Error::dims(
            "nearest_fixed_rank",
            format!("target rank {m} out of range for {n1}x{n2}"),
        ));
    }
    let dec = decomp::svd(h);
    let r = dec.rank();
    if r > m {
        let err: f64 = dec.s.iter().skip(m).map(|x| x * x).sum::<f64>().sqrt();
        return Ok((dec.reconstruct(m), err));
    }
    if r == m {
        return Ok((h.clone(), 0.0));
    }
    // Inflate the trailing singular values by an arbitrarily small amount.
    let fill = 0.5 * eps / ((m - r) as f64).sqrt();
    let mut s = dec.s.clone();
    let mut err = 0.0;
    for item in s.iter_mut().take(m).skip(r) {
        err += fill * fill;
        *item = fill;
    }
    let mut us = dec.u.slice(s![.., ..m]).to_owned();
    for (j, &sj) in s.iter().take(m).enumerate() {
        us.column_mut(j).mapv_inplace(|z| z * sj);
    }
    let vh = adjoint(&dec.v.slice(s![.., ..m]).to_owned());
    Ok((us.dot(&vh), err.sqrt()))
}
