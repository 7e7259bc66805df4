//! The regularized estimation objective and its Euclidean gradients.
//!
//! The data term is the stacked pilot residual
//! `Σ_t ||r[t] - Ĝ Φ[t] Ĥ s[t] - Ĥeq s[t]||²`; the four l1 terms penalize
//! the angular-domain projections of the DTE factors and the row/column
//! sums of the STE equivalent channel's projection. Gradients are with
//! respect to the conjugate variables, so the directional derivative along
//! `D` is `2 Re⟨∇, D⟩`.

use crate::channel::Dictionaries;
use crate::linalg::{adjoint, CMat, CVec, C64, ZERO};

/// Entries with modulus below this are treated as exactly zero when forming
/// phase-sign factors (the l1 gradient is undefined at the origin).
pub const PHASE_SIGN_FLOOR: f64 = 1e-8;

/// Regularization weights of the four sparsity terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct RegWeights {
    pub g: f64,
    pub h: f64,
    pub row: f64,
    pub col: f64,
}

/// One user's estimation data: pilots, observations, phase schedule and the
/// dictionaries/weights the objective needs.
#[derive(Debug, Clone)]
pub struct UserProblem<'a> {
    /// `N_UE x T`.
    pub pilots: &'a CMat,
    /// `N_BS x T`.
    pub received: &'a CMat,
    /// `N_DTE x T`.
    pub dte_phases: &'a CMat,
    pub dict: &'a Dictionaries,
    pub weights: RegWeights,
}

impl<'a> UserProblem<'a> {
    pub fn t_len(&self) -> usize {
        self.pilots.ncols()
    }

    /// `A_UE 1` (used by the row-sparsity term).
    pub fn ue_ones(&self) -> CVec {
        let a = &self.dict.a_ue;
        CVec::from_shape_fn(a.nrows(), |i| a.row(i).iter().sum())
    }

    /// `A_BS 1` (used by the column-sparsity term).
    pub fn bs_ones(&self) -> CVec {
        let a = &self.dict.a_bs;
        CVec::from_shape_fn(a.nrows(), |i| a.row(i).iter().sum())
    }
}

fn phase_sign(x: C64) -> C64 {
    let n = x.norm();
    if n < PHASE_SIGN_FLOOR {
        ZERO
    } else {
        x / n
    }
}

fn l1(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).sum()
}

fn l1_vec(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

/// l1 contribution of the Ĝ term alone.
pub(crate) fn reg_cost_g(prob: &UserProblem, g_dte: &CMat) -> f64 {
    if prob.weights.g > 0.0 {
        prob.weights.g * l1(&lambda_g(prob, g_dte))
    } else {
        0.0
    }
}

pub(crate) fn reg_cost_h(prob: &UserProblem, h_dte: &CMat) -> f64 {
    if prob.weights.h > 0.0 {
        prob.weights.h * l1(&lambda_h(prob, h_dte))
    } else {
        0.0
    }
}

pub(crate) fn reg_cost_eq(prob: &UserProblem, h_eq: &CMat) -> f64 {
    let w = prob.weights;
    let mut f = 0.0;
    if w.row > 0.0 {
        f += w.row * l1_vec(&row_projection(prob, h_eq));
    }
    if w.col > 0.0 {
        f += w.col * l1_vec(&col_projection(prob, h_eq));
    }
    f
}

/// Add `(υ_G/2) A_BS Y_G A_DTE^H` in place.
pub(crate) fn add_reg_grad_g(prob: &UserProblem, g_dte: &CMat, grad: &mut CMat) {
    let w = prob.weights;
    if w.g > 0.0 {
        let y = lambda_g(prob, g_dte).mapv(phase_sign);
        let reg = prob.dict.a_bs.dot(&y).dot(&adjoint(&prob.dict.a_dte));
        grad.zip_mut_with(&reg, |a, &b| *a += b * (w.g / 2.0));
    }
}

pub(crate) fn add_reg_grad_h(prob: &UserProblem, h_dte: &CMat, grad: &mut CMat) {
    let w = prob.weights;
    if w.h > 0.0 {
        let y = lambda_h(prob, h_dte).mapv(phase_sign);
        let reg = prob.dict.a_dte.dot(&y).dot(&adjoint(&prob.dict.a_ue));
        grad.zip_mut_with(&reg, |a, &b| *a += b * (w.h / 2.0));
    }
}

pub(crate) fn add_reg_grad_eq(prob: &UserProblem, h_eq: &CMat, grad: &mut CMat) {
    let w = prob.weights;
    if w.row > 0.0 {
        let y = row_projection(prob, h_eq).mapv(phase_sign);
        let ay = prob.dict.a_bs.dot(&y); // N_BS
        let ue1 = prob.ue_ones();
        for i in 0..grad.nrows() {
            for j in 0..grad.ncols() {
                grad[(i, j)] += ay[i] * ue1[j].conj() * (w.row / 2.0);
            }
        }
    }
    if w.col > 0.0 {
        let y = col_projection(prob, h_eq).mapv(phase_sign);
        let ya = prob.dict.a_ue.dot(&y.mapv(|z| z.conj())); // N_UE
        let bs1 = prob.bs_ones();
        for i in 0..grad.nrows() {
            for j in 0..grad.ncols() {
                grad[(i, j)] += bs1[i] * ya[j].conj() * (w.col / 2.0);
            }
        }
    }
}

/// Angular projection `A_BS^H Ĝ A_DTE` of the DTE-side BS channel.
pub fn lambda_g(prob: &UserProblem, g_dte: &CMat) -> CMat {
    adjoint(&prob.dict.a_bs).dot(g_dte).dot(&prob.dict.a_dte)
}

/// Angular projection `A_DTE^H Ĥ A_UE` of the DTE-side UE channel.
pub fn lambda_h(prob: &UserProblem, h_dte: &CMat) -> CMat {
    adjoint(&prob.dict.a_dte).dot(h_dte).dot(&prob.dict.a_ue)
}

/// Row-sum projection `A_BS^H Ĥeq (A_UE 1)` of the STE equivalent channel.
pub fn row_projection(prob: &UserProblem, h_eq: &CMat) -> CVec {
    adjoint(&prob.dict.a_bs).dot(h_eq).dot(&prob.ue_ones())
}

/// Column-sum projection `(A_BS 1)^H Ĥeq A_UE`, stored as a column vector of
/// the row's entries.
pub fn col_projection(prob: &UserProblem, h_eq: &CMat) -> CVec {
    let left = prob.bs_ones().mapv(|z| z.conj());
    prob.dict.a_ue.t().dot(&h_eq.t().dot(&left))
}

/// Phase-sign matrices of the current estimates; every entry has unit
/// modulus or is exactly zero below the floor.
#[derive(Debug, Clone)]
pub struct GradientWorkspace {
    pub y_g: CMat,
    pub y_h: CMat,
    pub y_row: CVec,
    pub y_col: CVec,
}

impl GradientWorkspace {
    pub fn compute(prob: &UserProblem, g_dte: &CMat, h_dte: &CMat, h_eq: &CMat) -> Self {
        GradientWorkspace {
            y_g: lambda_g(prob, g_dte).mapv(phase_sign),
            y_h: lambda_h(prob, h_dte).mapv(phase_sign),
            y_row: row_projection(prob, h_eq).mapv(phase_sign),
            y_col: col_projection(prob, h_eq).mapv(phase_sign),
        }
    }
}

/// Pilot-domain prediction residual `E = Ĝ (Φ ∘ (Ĥ S)) + Ĥeq S - R`.
pub fn residual(prob: &UserProblem, g_dte: &CMat, h_dte: &CMat, h_eq: &CMat) -> CMat {
    let mut x = h_dte.dot(prob.pilots);
    x.zip_mut_with(prob.dte_phases, |v, &p| *v *= p);
    let mut e = g_dte.dot(&x);
    e = e + h_eq.dot(prob.pilots);
    e - prob.received
}

/// The full estimation objective at a candidate triple.
pub fn dsd_objective(prob: &UserProblem, g_dte: &CMat, h_dte: &CMat, h_eq: &CMat) -> f64 {
    let e = residual(prob, g_dte, h_dte, h_eq);
    let mut f: f64 = e.iter().map(|z| z.norm_sqr()).sum();
    let w = prob.weights;
    if w.g > 0.0 {
        f += w.g * l1(&lambda_g(prob, g_dte));
    }
    if w.h > 0.0 {
        f += w.h * l1(&lambda_h(prob, h_dte));
    }
    if w.row > 0.0 {
        f += w.row * l1_vec(&row_projection(prob, h_eq));
    }
    if w.col > 0.0 {
        f += w.col * l1_vec(&col_projection(prob, h_eq));
    }
    f
}

/// Gradient of the objective with respect to `Ĝ*`:
/// `Σ_t e[t] (Φ[t] Ĥ s[t])^H + (υ_G/2) A_BS Y_G A_DTE^H`.
pub fn grad_g_dte(prob: &UserProblem, g_dte: &CMat, h_dte: &CMat, h_eq: &CMat) -> CMat {
    let mut x = h_dte.dot(prob.pilots);
    x.zip_mut_with(prob.dte_phases, |v, &p| *v *= p);
    let mut e = g_dte.dot(&x);
    e = e + h_eq.dot(prob.pilots);
    e = e - prob.received;
    let mut grad = e.dot(&adjoint(&x));
    add_reg_grad_g(prob, g_dte, &mut grad);
    grad
}

/// Gradient with respect to `Ĥ*`:
/// `Σ_t Φ[t]^H Ĝ^H e[t] s[t]^H + (υ_H/2) A_DTE Y_H A_UE^H`.
pub fn grad_h_dte(prob: &UserProblem, g_dte: &CMat, h_dte: &CMat, h_eq: &CMat) -> CMat {
    let e = residual(prob, g_dte, h_dte, h_eq);
    let mut ge = adjoint(g_dte).dot(&e); // N_DTE x T
    ge.zip_mut_with(prob.dte_phases, |v, &p| *v *= p.conj());
    let mut grad = ge.dot(&adjoint(prob.pilots));
    add_reg_grad_h(prob, h_dte, &mut grad);
    grad
}

/// Gradient with respect to `Ĥeq*`:
/// `Σ_t e[t] s[t]^H + (υ_row/2) A_BS Y_row (A_UE 1)^H + (υ_col/2) (A_BS 1) Y_col^T A_UE^H`.
pub fn grad_h_eq_ste(prob: &UserProblem, g_dte: &CMat, h_dte: &CMat, h_eq: &CMat) -> CMat {
    let e = residual(prob, g_dte, h_dte, h_eq);
    let mut grad = e.dot(&adjoint(prob.pilots));
    add_reg_grad_eq(prob, h_eq, &mut grad);
    grad
}

/// Auto-balanced weights: `scale * (initial residual) / (initial l1 term)`
/// for each of the four terms, zero where the term itself vanishes. The DTE
/// factor terms and the STE row/column terms take separate scales.
pub fn balance_weights(
    prob: &UserProblem,
    g_dte: &CMat,
    h_dte: &CMat,
    h_eq: &CMat,
    scale_dte: f64,
    scale_ste: f64,
    with_ste: bool,
) -> RegWeights {
    let e = residual(prob, g_dte, h_dte, h_eq);
    let resid: f64 = e.iter().map(|z| z.norm_sqr()).sum();
    let ratio = |scale: f64, term: f64| if term > 0.0 { scale * resid / term } else { 0.0 };
    RegWeights {
        g: ratio(scale_dte, l1(&lambda_g(prob, g_dte))),
        h: ratio(scale_dte, l1(&lambda_h(prob, h_dte))),
        row: if with_ste {
            ratio(scale_ste, l1_vec(&row_projection(prob, h_eq)))
        } else {
            0.0
        },
        col: if with_ste {
            ratio(scale_ste, l1_vec(&col_projection(prob, h_eq)))
        } else {
            0.0
        },
    }
}
