//! Fixed-rank matrix manifold in SVD-factored form.
//!
//! Points are `U diag(s) V^H` with orthonormal `U`, `V` and strictly positive
//! singular values; tangent vectors use the usual factored parameterization
//! `U M V^H + U_p V^H + U V_p^H` with `U^H U_p = 0`, `V^H V_p = 0`. The
//! retraction is metric projection: a rank-`m` truncated SVD of the ambient
//! update, computed through a small `2m x 2m` core so its cost stays
//! proportional to the factor sizes.

use ndarray::s;
use num_complex::Complex;
use rand::Rng;

use super::Manifold;
use crate::error::{Error, Result};
use crate::linalg::{adjoint, crandn_mat, decomp, CMat};

/// Relative floor on retained singular values; below this a retraction step
/// is reported as degenerate (rank collapse).
pub const RANK_FLOOR: f64 = 1e-12;

/// A rank-`m` matrix stored as thin SVD factors.
#[derive(Debug, Clone)]
pub struct FixedRankPoint {
    /// `n1 x m`, orthonormal columns.
    pub u: CMat,
    /// Length `m`, strictly positive, non-increasing.
    pub s: Vec<f64>,
    /// `n2 x m`, orthonormal columns.
    pub v: CMat,
}

impl FixedRankPoint {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    /// Dense ambient matrix `U diag(s) V^H`.
    pub fn to_matrix(&self) -> CMat {
        let mut us = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            us.column_mut(j).mapv_inplace(|z| z * sj);
        }
        us.dot(&adjoint(&self.v))
    }

    /// Project a dense matrix onto the rank-`m` manifold by truncated SVD.
    ///
    /// Singular values below the rank floor are inflated to keep the point
    /// strictly on the manifold (the arbitrarily-small inflation of the rank
    /// selection rule).
    pub fn from_matrix(a: &CMat, m: usize) -> Result<Self> {
        let (n1, n2) = a.dim();
        if m == 0 || m > n1.min(n2) {
            return Err(Error::dims(
                "fixed_rank::from_matrix",
                format!("rank {m} out of range for {n1}x{n2}"),
            ));
        }
        let dec = decomp::svd(a);
        let mut s: Vec<f64> = dec.s[..m].to_vec();
        let smax = s[0].max(f64::MIN_POSITIVE);
        let floor = RANK_FLOOR * smax;
        for x in s.iter_mut() {
            if *x < floor {
                *x = floor;
            }
        }
        Ok(FixedRankPoint {
            u: dec.u.slice(s![.., ..m]).to_owned(),
            s,
            v: dec.v.slice(s![.., ..m]).to_owned(),
        })
    }

    /// Random point: orthonormal factors from a QR of Gaussian matrices,
    /// singular values spread in [0.5, 1.5].
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n1: usize, n2: usize, m: usize) -> Self {
        let (qu, _) = decomp::qr_thin(&crandn_mat(rng, n1, m));
        let (qv, _) = decomp::qr_thin(&crandn_mat(rng, n2, m));
        let mut s: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..1.5)).collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        FixedRankPoint { u: qu, s, v: qv }
    }

    /// Multiply the represented matrix by a real scalar (scales singular values).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for x in out.s.iter_mut() {
            *x *= factor;
        }
        out
    }
}

/// Tangent vector at a fixed-rank point, factored form.
#[derive(Debug, Clone)]
pub struct FixedRankTangent {
    /// `m x m` core.
    pub m_core: CMat,
    /// `n1 x m`, orthogonal to the point's `U`.
    pub up: CMat,
    /// `n2 x m`, orthogonal to the point's `V`.
    pub vp: CMat,
}

/// The manifold of `n1 x n2` complex matrices with fixed rank `m`.
#[derive(Debug, Clone)]
pub struct FixedRankManifold {
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
}

impl FixedRankManifold {
    pub fn new(n1: usize, n2: usize, m: usize) -> Self {
        assert!(m >= 1 && m <= n1.min(n2), "rank must satisfy 1 <= m <= min dims");
        FixedRankManifold { n1, n2, m }
    }
}

impl Manifold for FixedRankManifold {
    type Point = FixedRankPoint;
    type Tangent = FixedRankTangent;
    type Ambient = CMat;

    fn project(&self, x: &FixedRankPoint, z: &CMat) -> FixedRankTangent {
        // P(Z) = U U^H Z + Z V V^H - U U^H Z V V^H
        let uh = adjoint(&x.u);
        let zv = z.dot(&x.v); // n1 x m
        let uhz = uh.dot(z); // m x n2
        let m_core = uh.dot(&zv); // m x m
        let up = &zv - &x.u.dot(&m_core);
        let vp = &adjoint(&uhz) - &x.v.dot(&adjoint(&m_core));
        FixedRankTangent { m_core, up, vp }
    }

    fn retract(&self, x: &FixedRankPoint, t: &FixedRankTangent, step: f64) -> Result<FixedRankPoint> {
        let m = self.m;
        // X + step*T = [U Qu] C [V Qv]^H with a 2m x 2m core C.
        let (qu, ru) = decomp::qr_thin(&t.up);
        let (qv, rv) = decomp::qr_thin(&t.vp);
        let mut core = CMat::zeros((2 * m, 2 * m));
        for i in 0..m {
            for j in 0..m {
                core[(i, j)] = t.m_core[(i, j)] * step;
            }
            core[(i, i)] += Complex::new(x.s[i], 0.0);
        }
        let rvh = adjoint(&rv);
        for i in 0..m {
            for j in 0..m {
                core[(i, m + j)] = rvh[(i, j)] * step;
                core[(m + i, j)] = ru[(i, j)] * step;
            }
        }
        let dec = decomp::svd(&core);
        let smax = dec.s[0];
        if !(smax > 0.0) || dec.s[m - 1] < RANK_FLOOR * smax {
            return Err(Error::DegenerateStep(format!(
                "singular value {} below floor {}",
                dec.s[m - 1],
                RANK_FLOOR * smax
            )));
        }
        // New factors: [U Qu] * Uc[:, :m] and [V Qv] * Vc[:, :m].
        let uc = dec.u.slice(s![.., ..m]);
        let vc = dec.v.slice(s![.., ..m]);
        let u_new = x.u.dot(&uc.slice(s![..m, ..])) + qu.dot(&uc.slice(s![m.., ..]));
        let v_new = x.v.dot(&vc.slice(s![..m, ..])) + qv.dot(&vc.slice(s![m.., ..]));
        Ok(FixedRankPoint {
            u: u_new,
            s: dec.s[..m].to_vec(),
            v: v_new,
        })
    }

    fn inner(&self, _x: &FixedRankPoint, a: &FixedRankTangent, b: &FixedRankTangent) -> f64 {
        // Cross terms vanish because U^H Up = 0 and V^H Vp = 0.
        crate::linalg::fro_inner_re(&a.m_core, &b.m_core)
            + crate::linalg::fro_inner_re(&a.up, &b.up)
            + crate::linalg::fro_inner_re(&a.vp, &b.vp)
    }

    fn tangent_to_ambient(&self, x: &FixedRankPoint, t: &FixedRankTangent) -> CMat {
        let vh = adjoint(&x.v);
        let mut out = x.u.dot(&t.m_core).dot(&vh);
        out = out + t.up.dot(&vh);
        out = out + x.u.dot(&adjoint(&t.vp));
        out
    }

    fn lincomb(
        &self,
        a: f64,
        t1: &FixedRankTangent,
        b: f64,
        t2: &FixedRankTangent,
    ) -> FixedRankTangent {
        FixedRankTangent {
            m_core: t1.m_core.mapv(|z| z * a) + t2.m_core.mapv(|z| z * b),
            up: t1.up.mapv(|z| z * a) + t2.up.mapv(|z| z * b),
            vp: t1.vp.mapv(|z| z * a) + t2.vp.mapv(|z| z * b),
        }
    }

    fn scale(&self, a: f64, t: &FixedRankTangent) -> FixedRankTangent {
        FixedRankTangent {
            m_core: t.m_core.mapv(|z| z * a),
            up: t.up.mapv(|z| z * a),
            vp: t.vp.mapv(|z| z * a),
        }
    }

    fn point_norm(&self, x: &FixedRankPoint) -> f64 {
        x.s.iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{crandn_mat, eye, fro_inner_re, fro_norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn orthonormality_defect(q: &CMat) -> f64 {
        fro_norm(&(&adjoint(q).dot(q) - &eye(q.ncols())))
    }

    #[test]
    fn factors_stay_orthonormal() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let man = FixedRankManifold::new(7, 5, 3);
        let mut x = FixedRankPoint::random(&mut rng, 7, 5, 3);
        for _ in 0..10 {
            let z = crandn_mat(&mut rng, 7, 5);
            let t = man.project(&x, &z);
            x = man.retract(&x, &t, 0.3).unwrap();
            assert!(orthonormality_defect(&x.u) < 1e-10);
            assert!(orthonormality_defect(&x.v) < 1e-10);
            assert!(x.s.iter().all(|&s| s > 0.0));
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let man = FixedRankManifold::new(6, 4, 2);
        let x = FixedRankPoint::random(&mut rng, 6, 4, 2);
        let z = crandn_mat(&mut rng, 6, 4);
        let t1 = man.project(&x, &z);
        let amb1 = man.tangent_to_ambient(&x, &t1);
        let t2 = man.project(&x, &amb1);
        let amb2 = man.tangent_to_ambient(&x, &t2);
        assert!(fro_norm(&(&amb1 - &amb2)) < 1e-10);
    }

    #[test]
    fn tangent_vector_passes_through_projection() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let man = FixedRankManifold::new(6, 4, 2);
        let x = FixedRankPoint::random(&mut rng, 6, 4, 2);
        let z = crandn_mat(&mut rng, 6, 4);
        let t = man.project(&x, &z);
        let amb = man.tangent_to_ambient(&x, &t);
        let t_again = man.project(&x, &amb);
        let diff = man.lincomb(1.0, &t, -1.0, &t_again);
        assert!(man.inner(&x, &diff, &diff).sqrt() < 1e-10);
    }

    #[test]
    fn projection_residual_orthogonal_to_tangents() {
        let mut rng = ChaCha12Rng::seed_from_u64(24);
        let man = FixedRankManifold::new(5, 5, 2);
        let x = FixedRankPoint::random(&mut rng, 5, 5, 2);
        let z = crandn_mat(&mut rng, 5, 5);
        let t = man.project(&x, &z);
        let resid = &z - &man.tangent_to_ambient(&x, &t);
        for _ in 0..10 {
            let probe = man.project(&x, &crandn_mat(&mut rng, 5, 5));
            let probe_amb = man.tangent_to_ambient(&x, &probe);
            assert!(
                fro_inner_re(&resid, &probe_amb).abs() < 1e-10,
                "residual not orthogonal"
            );
        }
    }

    #[test]
    fn retract_zero_step_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(25);
        let man = FixedRankManifold::new(6, 6, 3);
        let x = FixedRankPoint::random(&mut rng, 6, 6, 3);
        let z = crandn_mat(&mut rng, 6, 6);
        let t = man.project(&x, &z);
        let y = man.retract(&x, &t, 0.0).unwrap();
        assert!(fro_norm(&(&y.to_matrix() - &x.to_matrix())) < 1e-12);
    }

    #[test]
    fn retract_preserves_rank() {
        let mut rng = ChaCha12Rng::seed_from_u64(26);
        let man = FixedRankManifold::new(8, 6, 3);
        let x = FixedRankPoint::random(&mut rng, 8, 6, 3);
        let t = man.project(&x, &crandn_mat(&mut rng, 8, 6));
        let y = man.retract(&x, &t, 0.7).unwrap();
        assert_eq!(decomp::numerical_rank_of(&y.to_matrix()), 3);
    }

    #[test]
    fn retraction_first_order_agreement() {
        // ||retract(X, tT) - (X + tT)|| must shrink like t^2.
        let mut rng = ChaCha12Rng::seed_from_u64(27);
        let man = FixedRankManifold::new(7, 6, 3);
        let x = FixedRankPoint::random(&mut rng, 7, 6, 3);
        let t = man.project(&x, &crandn_mat(&mut rng, 7, 6));
        let xm = x.to_matrix();
        let tm = man.tangent_to_ambient(&x, &t);
        let err_at = |h: f64| {
            let y = man.retract(&x, &t, h).unwrap();
            fro_norm(&(&y.to_matrix() - &(&xm + &tm.mapv(|z| z * h))))
        };
        let e1 = err_at(1e-2);
        let e2 = err_at(5e-3);
        let ratio = e1 / e2;
        assert!(
            (3.0..5.0).contains(&ratio),
            "second-order ratio {ratio} (e1={e1}, e2={e2})"
        );
    }

    #[test]
    fn rank_collapse_is_degenerate() {
        // Moving exactly onto a lower-rank matrix must signal a degenerate step.
        let mut rng = ChaCha12Rng::seed_from_u64(28);
        let man = FixedRankManifold::new(4, 4, 2);
        let x = FixedRankPoint::random(&mut rng, 4, 4, 2);
        // Tangent that zeros the second singular direction: M = diag(0, -s2).
        let mut m_core = CMat::zeros((2, 2));
        m_core[(1, 1)] = Complex::new(-x.s[1], 0.0);
        let t = FixedRankTangent {
            m_core,
            up: CMat::zeros((4, 2)),
            vp: CMat::zeros((4, 2)),
        };
        match man.retract(&x, &t, 1.0) {
            Err(Error::DegenerateStep(_)) => {}
            other => panic!("expected degenerate step, got {other:?}"),
        }
    }

    #[test]
    fn from_matrix_truncates() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let a = crandn_mat(&mut rng, 6, 5);
        let p = FixedRankPoint::from_matrix(&a, 2).unwrap();
        let dec = decomp::svd(&a);
        let best = dec.reconstruct(2);
        assert!(fro_norm(&(&p.to_matrix() - &best)) < 1e-10);
        assert!(FixedRankPoint::from_matrix(&a, 6).is_err());
    }
}
