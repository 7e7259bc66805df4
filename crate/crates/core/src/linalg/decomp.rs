//! Dense complex decompositions: SVD, QR, Cholesky, Hermitian eigen.
//!
//! The SVD uses one-sided Jacobi rotations, which keeps the computed factors
//! orthonormal to machine precision at the matrix sizes used here (a few
//! hundred at most). Singular vectors attached to zero singular values are
//! completed deterministically so callers always receive full orthonormal
//! factor blocks.

use ndarray::s;
use num_complex::Complex;

use super::{adjoint, eye, CMat, CVec, C64, ONE, ZERO};
use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 64;

/// Thin singular value decomposition `A = U diag(s) V^H`.
///
/// `u` is `m x k`, `v` is `n x k` with `k = min(m, n)`; both have orthonormal
/// columns, `s` is non-increasing and non-negative.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

impl Svd {
    /// Reassemble `U diag(s) V^H`, optionally truncated to the leading `rank`
    /// singular triplets.
    pub fn reconstruct(&self, rank: usize) -> CMat {
        let k = rank.min(self.s.len());
        let u = self.u.slice(s![.., ..k]);
        let v = self.v.slice(s![.., ..k]);
        let mut us = u.to_owned();
        for (j, &sj) in self.s.iter().take(k).enumerate() {
            us.column_mut(j).mapv_inplace(|z| z * sj);
        }
        us.dot(&adjoint(&v.to_owned()).view())
    }

    /// Numerical rank with the usual `max(m,n) * eps * s_max` threshold.
    pub fn rank(&self) -> usize {
        let (m, _) = self.u.dim();
        let (n, _) = self.v.dim();
        let smax = self.s.first().copied().unwrap_or(0.0);
        let tol = m.max(n) as f64 * f64::EPSILON * smax;
        self.s.iter().filter(|&&x| x > tol).count()
    }
}

/// One-sided Jacobi SVD.
pub fn svd(a: &CMat) -> Svd {
    let (m, n) = a.dim();
    if m >= n {
        svd_tall(a)
    } else {
        // SVD of A^H, then swap factors.
        let t = svd_tall(&adjoint(a));
        Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        }
    }
}

fn svd_tall(a: &CMat) -> Svd {
    let (m, n) = a.dim();
    let mut w = a.clone();
    let mut v = eye(n);

    for _ in 0..MAX_SWEEPS {
        let mut converged = true;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (app, aqq, apq) = column_gram(&w, p, q);
                if apq.norm() <= JACOBI_TOL * (app * aqq).sqrt() || apq.norm() == 0.0 {
                    continue;
                }
                converged = false;
                // Diagonalize the 2x2 Hermitian Gram block via a complex
                // Jacobi rotation: phase-align, then a real rotation.
                let alpha = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s_ = c * t;
                rotate_columns(&mut w, p, q, c, s_, alpha);
                rotate_columns(&mut v, p, q, c, s_, alpha);
            }
        }
        if converged {
            break;
        }
    }

    // Column norms are the singular values; sort descending.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| w.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut u = CMat::zeros((m, n));
    let mut vv = CMat::zeros((n, n));
    let mut sigma = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        sigma.push(norms[src]);
        vv.column_mut(dst).assign(&v.column(src));
        u.column_mut(dst).assign(&w.column(src));
    }
    let smax = sigma.first().copied().unwrap_or(0.0);
    let tiny = if smax > 0.0 {
        smax * f64::EPSILON * m.max(n) as f64
    } else {
        0.0
    };
    let mut deficient = Vec::new();
    for j in 0..n {
        if sigma[j] > tiny && sigma[j] > 0.0 {
            let inv = 1.0 / sigma[j];
            u.column_mut(j).mapv_inplace(|z| z * inv);
        } else {
            deficient.push(j);
        }
    }
    if !deficient.is_empty() {
        complete_orthonormal(&mut u, &deficient);
    }

    Svd { u, s: sigma, v: vv }
}

fn column_gram(w: &CMat, p: usize, q: usize) -> (f64, f64, C64) {
    let mut app = 0.0;
    let mut aqq = 0.0;
    let mut apq = ZERO;
    for i in 0..w.nrows() {
        let wp = w[(i, p)];
        let wq = w[(i, q)];
        app += wp.norm_sqr();
        aqq += wq.norm_sqr();
        apq += wp.conj() * wq;
    }
    (app, aqq, apq)
}

/// Apply the unitary pair rotation on columns p and q:
/// `w_p <- c w_p - s conj(alpha)^{-1}...`; concretely
/// `w_p' = c w_p - s e^{-i arg} w_q`, `w_q' = s w_p + c e^{-i arg} w_q`
/// with `e^{-i arg} = conj(alpha)`.
fn rotate_columns(w: &mut CMat, p: usize, q: usize, c: f64, s_: f64, alpha: C64) {
    let ac = alpha.conj();
    for i in 0..w.nrows() {
        let wp = w[(i, p)];
        let wq = w[(i, q)];
        w[(i, p)] = wp * c - wq * (ac * s_);
        w[(i, q)] = wp * s_ + wq * (ac * c);
    }
}

/// Replace the listed (numerically zero) columns with unit vectors
/// orthogonal to all other columns. Deterministic: tries canonical basis
/// vectors in order and keeps the first with enough orthogonal residual.
fn complete_orthonormal(u: &mut CMat, deficient: &[usize]) {
    let m = u.nrows();
    let n = u.ncols();
    let mut done: Vec<usize> = (0..n).filter(|j| !deficient.contains(j)).collect();
    for &j in deficient {
        let mut chosen = None;
        for e in 0..m {
            let mut cand = CVec::zeros(m);
            cand[e] = ONE;
            // Two rounds of Gram-Schmidt against the completed columns.
            for _ in 0..2 {
                for &k in &done {
                    let proj: C64 = u
                        .column(k)
                        .iter()
                        .zip(cand.iter())
                        .map(|(a, b)| a.conj() * b)
                        .sum();
                    for i in 0..m {
                        cand[i] -= proj * u[(i, k)];
                    }
                }
            }
            let nrm = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nrm > 0.5 {
                cand.mapv_inplace(|z| z / nrm);
                chosen = Some(cand);
                break;
            }
        }
        let cand = chosen.expect("orthonormal completion exists for m >= n");
        u.column_mut(j).assign(&cand);
        done.push(j);
    }
}

/// Numerical rank via SVD.
pub fn numerical_rank_of(a: &CMat) -> usize {
    svd(a).rank()
}

/// Thin QR factorization `A = Q R` via Householder reflections.
///
/// `Q` is `m x k`, `R` is `k x n`, `k = min(m, n)`.
pub fn qr_thin(a: &CMat) -> (CMat, CMat) {
    let (m, n) = a.dim();
    let k = m.min(n);
    let mut r = a.clone();
    // Store reflectors.
    let mut vs: Vec<CVec> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v = CVec::zeros(m - j);
        for i in j..m {
            v[i - j] = r[(i, j)];
        }
        let xnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            vs.push(CVec::zeros(m - j));
            continue;
        }
        let phase = if v[0].norm() > 0.0 {
            v[0] / v[0].norm()
        } else {
            ONE
        };
        let alpha = -phase * xnorm;
        v[0] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm_sq > 0.0 {
            // Apply H = I - 2 v v^H / (v^H v) to the trailing block.
            for col in j..n {
                let mut dot = ZERO;
                for i in j..m {
                    dot += v[i - j].conj() * r[(i, col)];
                }
                let coef = dot * (2.0 / vnorm_sq);
                for i in j..m {
                    let vi = v[i - j];
                    r[(i, col)] -= coef * vi;
                }
            }
        }
        vs.push(v);
    }
    // Accumulate Q by applying reflectors to the first k identity columns.
    let mut q = CMat::zeros((m, k));
    for j in 0..k {
        q[(j, j)] = ONE;
    }
    for j in (0..k).rev() {
        let v = &vs[j];
        let vnorm_sq: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        for col in 0..k {
            let mut dot = ZERO;
            for i in j..m {
                dot += v[i - j].conj() * q[(i, col)];
            }
            let coef = dot * (2.0 / vnorm_sq);
            for i in j..m {
                let vi = v[i - j];
                q[(i, col)] -= coef * vi;
            }
        }
    }
    let rtop = r.slice(s![..k, ..]).to_owned();
    (q, rtop)
}

/// Cholesky factor (lower triangular) of a Hermitian positive definite matrix.
pub fn cholesky(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dims("cholesky", "matrix not square".to_string()));
    }
    let mut l = CMat::zeros((n, n));
    for j in 0..n {
        let mut diag = a[(j, j)].re;
        for k in 0..j {
            diag -= l[(j, k)].norm_sqr();
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::Singular("cholesky"));
        }
        let dj = diag.sqrt();
        l[(j, j)] = Complex::new(dj, 0.0);
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / dj;
        }
    }
    Ok(l)
}

/// Solve `A X = B` for Hermitian positive definite `A` via Cholesky.
pub fn solve_hermitian(a: &CMat, b: &CMat) -> Result<CMat> {
    let l = cholesky(a)?;
    let n = l.nrows();
    let mut x = b.clone();
    // Forward substitution L Y = B.
    for col in 0..x.ncols() {
        for i in 0..n {
            let mut v = x[(i, col)];
            for k in 0..i {
                v -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = v / l[(i, i)].re;
        }
        // Back substitution L^H X = Y.
        for i in (0..n).rev() {
            let mut v = x[(i, col)];
            for k in i + 1..n {
                v -= l[(k, i)].conj() * x[(k, col)];
            }
            x[(i, col)] = v / l[(i, i)].re;
        }
    }
    Ok(x)
}

/// `log det A` for Hermitian positive definite `A`.
pub fn logdet_hermitian(a: &CMat) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

/// Eigendecomposition of a Hermitian matrix by two-sided Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as columns.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigh expects a square matrix");
    let mut m = a.clone();
    let mut q = eye(n);
    let scale: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n.saturating_sub(1) {
            for q_ in p + 1..n {
                off += m[(p, q_)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for r in p + 1..n {
                let apq = m[(p, r)];
                if apq.norm() <= 1e-300 {
                    continue;
                }
                let app = m[(p, p)].re;
                let aqq = m[(r, r)].re;
                let alpha = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s_ = c * t;
                // M <- J^H M J with J the pair rotation used in the SVD.
                rotate_columns(&mut m, p, r, c, s_, alpha);
                rotate_rows_adjoint(&mut m, p, r, c, s_, alpha);
                rotate_columns(&mut q, p, r, c, s_, alpha);
            }
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (m[(i, i)].re, i)).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut vals = Vec::with_capacity(n);
    let mut vecs = CMat::zeros((n, n));
    for (dst, (val, src)) in pairs.into_iter().enumerate() {
        vals.push(val);
        vecs.column_mut(dst).assign(&q.column(src));
    }
    (vals, vecs)
}

fn rotate_rows_adjoint(m: &mut CMat, p: usize, q: usize, c: f64, s_: f64, alpha: C64) {
    // Left-multiplication by J^H, i.e. rows p,q mix with conjugated weights.
    let a = alpha.conj();
    for j in 0..m.ncols() {
        let rp = m[(p, j)];
        let rq = m[(q, j)];
        m[(p, j)] = rp * c - rq * (a * s_).conj();
        m[(q, j)] = rp * s_ + rq * (a * c).conj();
    }
}

/// Minimum-norm least-squares solution of `A x = b` via the pseudo-inverse.
pub fn lstsq_min_norm(a: &CMat, b: &CVec) -> CVec {
    let dec = svd(a);
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * smax;
    let k = dec.s.len();
    let mut x = CVec::zeros(a.ncols());
    for j in 0..k {
        if dec.s[j] <= tol || dec.s[j] == 0.0 {
            continue;
        }
        let uj = dec.u.column(j);
        let coef: C64 = uj.iter().zip(b.iter()).map(|(u, r)| u.conj() * r).sum();
        let coef = coef / dec.s[j];
        for i in 0..a.ncols() {
            x[i] += coef * dec.v[(i, j)];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{crandn_mat, fro_norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn orthonormality_defect(q: &CMat) -> f64 {
        let g = adjoint(q).dot(q);
        fro_norm(&(&g - &eye(q.ncols())))
    }

    #[test]
    fn svd_reconstructs_and_is_orthonormal() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for &(m, n) in &[(5usize, 3usize), (3, 5), (8, 8), (12, 4), (1, 1)] {
            let a = crandn_mat(&mut rng, m, n);
            let dec = svd(&a);
            assert!(orthonormality_defect(&dec.u) < 1e-12, "{m}x{n} U");
            assert!(orthonormality_defect(&dec.v) < 1e-12, "{m}x{n} V");
            let rec = dec.reconstruct(m.min(n));
            assert!(
                fro_norm(&(&rec - &a)) < 1e-11 * fro_norm(&a).max(1.0),
                "{m}x{n} reconstruction"
            );
            for w in dec.s.windows(2) {
                assert!(w[0] >= w[1] - 1e-14);
            }
        }
    }

    #[test]
    fn svd_rank_deficient_completion() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        // Rank-2 6x4 matrix.
        let b = crandn_mat(&mut rng, 6, 2);
        let c = crandn_mat(&mut rng, 2, 4);
        let a = b.dot(&c);
        let dec = svd(&a);
        assert_eq!(dec.rank(), 2);
        assert!(orthonormality_defect(&dec.u) < 1e-12);
        assert!(orthonormality_defect(&dec.v) < 1e-12);
        assert!(dec.s[2] < 1e-12 * dec.s[0]);
    }

    #[test]
    fn qr_factors() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for &(m, n) in &[(7usize, 4usize), (4, 7), (5, 5)] {
            let a = crandn_mat(&mut rng, m, n);
            let (q, r) = qr_thin(&a);
            assert!(orthonormality_defect(&q) < 1e-13);
            let rec = q.dot(&r);
            assert!(fro_norm(&(&rec - &a)) < 1e-12 * fro_norm(&a).max(1.0));
        }
    }

    #[test]
    fn cholesky_solves() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let b = crandn_mat(&mut rng, 5, 5);
        let a = adjoint(&b).dot(&b) + eye(5).mapv(|z| z * 0.1);
        let rhs = crandn_mat(&mut rng, 5, 2);
        let x = solve_hermitian(&a, &rhs).unwrap();
        assert!(fro_norm(&(&a.dot(&x) - &rhs)) < 1e-10);
        // logdet agrees with eigenvalue sum.
        let (vals, _) = eigh(&a);
        let ld: f64 = vals.iter().map(|v| v.ln()).sum();
        assert!((logdet_hermitian(&a).unwrap() - ld).abs() < 1e-9);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = eye(3);
        a[(2, 2)] = Complex::new(-1.0, 0.0);
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn eigh_reconstructs() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let b = crandn_mat(&mut rng, 6, 6);
        let a = &b + &adjoint(&b); // Hermitian
        let (vals, vecs) = eigh(&a);
        assert!(orthonormality_defect(&vecs) < 1e-12);
        let mut lam = CMat::zeros((6, 6));
        for i in 0..6 {
            lam[(i, i)] = Complex::new(vals[i], 0.0);
        }
        let rec = vecs.dot(&lam).dot(&adjoint(&vecs));
        assert!(fro_norm(&(&rec - &a)) < 1e-10 * fro_norm(&a).max(1.0));
    }

    #[test]
    fn min_norm_least_squares() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        // Consistent overdetermined system: exact solve.
        let a = crandn_mat(&mut rng, 8, 3);
        let x0 = crate::linalg::crandn_vec(&mut rng, 3);
        let b = a.dot(&x0);
        let x = lstsq_min_norm(&a, &b);
        assert!(crate::linalg::fro_norm_vec(&(&x - &x0)) < 1e-10);
        // Underdetermined: residual zero, minimal norm among solutions.
        let a2 = crandn_mat(&mut rng, 3, 8);
        let b2 = crate::linalg::crandn_vec(&mut rng, 3);
        let x2 = lstsq_min_norm(&a2, &b2);
        assert!(crate::linalg::fro_norm_vec(&(&a2.dot(&x2) - &b2)) < 1e-10);
    }
}
