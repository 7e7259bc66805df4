//! Overall cascaded channel estimation: the stacked measurement matrix and
//! its rank diagnostic.
//!
//! With more than one STE the rows of the phase matrix belonging to the
//! STEs are constant across pilots, which makes the stacked measurement
//! matrix `J = (L ⊙ S)^T ⊗ I` column rank-deficient no matter how many
//! pilots are sent. The min-norm LS estimate here demonstrates exactly that
//! failure and doubles as a dense baseline when at most one STE is present.


use ndarray::s;

use crate::channel::PilotBlock;
use crate::error::Result;
use crate::linalg::{decomp, eye, khatri_rao, kron, unvec, vec_cols, CMat};

/// The stacked measurement matrix `J_k = (L_k ⊙ S_k)^T ⊗ I_{N_BS}` of one
/// pilot block (`N_BS T x N_UE N_BS N`).
pub fn measurement_matrix(block: &PilotBlock, n_bs: usize) -> CMat {
    let t_len = block.t_len();
    let n = block.dte_phases.nrows() + block.ste_phases.len();
    // L_k: N x T, column t = ψ[t].
    let mut l = CMat::zeros((n, t_len));
    for t in 0..t_len {
        l.column_mut(t).assign(&block.psi(t));
    }
    let ls = khatri_rao(&l, &block.pilots).expect("equal pilot counts");
    kron(&ls.t().to_owned(), &eye(n_bs))
}

/// Min-norm LS estimate of the overall cascaded channel plus the rank
/// diagnostic of the measurement matrix.
#[derive(Debug, Clone)]
pub struct LsDiagnostic {
    /// `N_UE N_BS x N` estimate of the overall cascaded channel.
    pub h_ca: CMat,
    /// Numerical rank of `J_k`.
    pub rank: usize,
    /// `N_UE N_BS N - rank`, the column rank deficiency.
    pub deficiency: usize,
}

/// Solve `min ||r - J vec(H_ca)||` in the min-norm sense via the
/// pseudo-inverse and report the rank deficiency of `J`.
pub fn ls_overall_cascaded(block: &PilotBlock, n_bs: usize) -> Result<LsDiagnostic> {
    let received = block.received()?;
    let n = block.dte_phases.nrows() + block.ste_phases.len();
    let n_ue = block.pilots.nrows();
    let j = measurement_matrix(block, n_bs);
    let r_stacked = vec_cols(received);
    let x = decomp::lstsq_min_norm(&j, &r_stacked);
    let cols = n_ue * n_bs * n;
    let rank = decomp::numerical_rank_of(&j);
    let h_ca = unvec(&x.slice(s![..cols]).to_owned(), n_ue * n_bs, n)?;
    Ok(LsDiagnostic {
        h_ca,
        rank,
        deficiency: cols - rank,
    })
}
