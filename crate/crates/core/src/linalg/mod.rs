//! Complex dense linear algebra primitives.
//!
//! Everything downstream (channels, estimation, beamforming) works with
//! column-major `vec`/`mat` conventions established here; the Kronecker,
//! Khatri-Rao and Hadamard products follow the usual definitions so that
//! `vec(ABD) = (D^T ⊗ A) vec(B)` and `vec(ACD) = (D^T ⊙ A) diag(C)` hold
//! exactly.

pub mod decomp;

use ndarray::{Array1, Array2};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;

pub const ONE: C64 = Complex::new(1.0, 0.0);
pub const ZERO: C64 = Complex::new(0.0, 0.0);
pub const I: C64 = Complex::new(0.0, 1.0);

/// Identity matrix of size `n`.
pub fn eye(n: usize) -> CMat {
    let mut a = CMat::zeros((n, n));
    for i in 0..n {
        a[(i, i)] = ONE;
    }
    a
}

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// Frobenius norm.
pub fn fro_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn fro_norm_vec(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Real part of the Frobenius inner product `⟨A, B⟩ = Re tr(A^H B)`.
pub fn fro_inner_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x.conj() * y).re)
        .sum()
}

/// Complex Frobenius inner product `tr(A^H B)`.
pub fn fro_inner(a: &CMat, b: &CMat) -> C64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// True when every entry is finite.
pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = CMat::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(b, |o, &bb| *o = aij * bb);
        }
    }
    out
}

/// Kronecker product of two column vectors.
pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

/// Khatri-Rao (column-wise Kronecker) product `A ⊙ B`.
///
/// Requires equal column counts; column `j` of the result is `a_j ⊗ b_j`.
pub fn khatri_rao(a: &CMat, b: &CMat) -> Result<CMat> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    if ac != bc {
        return Err(Error::dims(
            "khatri_rao",
            format!("column counts differ: {ac} vs {bc}"),
        ));
    }
    let mut out = CMat::zeros((ar * br, ac));
    for j in 0..ac {
        for i in 0..ar {
            let aij = a[(i, j)];
            for k in 0..br {
                out[(i * br + k, j)] = aij * b[(k, j)];
            }
        }
    }
    Ok(out)
}

/// Element-wise (Hadamard) product.
pub fn hadamard(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.dim() != b.dim() {
        return Err(Error::dims(
            "hadamard",
            format!("shapes differ: {:?} vs {:?}", a.dim(), b.dim()),
        ));
    }
    Ok(a * b)
}

/// Column-major vectorization.
pub fn vec_cols(a: &CMat) -> CVec {
    let (r, c) = a.dim();
    let mut out = CVec::zeros(r * c);
    for j in 0..c {
        for i in 0..r {
            out[j * r + i] = a[(i, j)];
        }
    }
    out
}

/// Inverse of [`vec_cols`]: reshape a length `rows*cols` vector column-major.
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> Result<CMat> {
    if v.len() != rows * cols {
        return Err(Error::dims(
            "unvec",
            format!("length {} != {rows}x{cols}", v.len()),
        ));
    }
    let mut out = CMat::zeros((rows, cols));
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = v[j * rows + i];
        }
    }
    Ok(out)
}

/// Standard circularly-symmetric complex normal sample, unit variance.
///
/// Two independent real normals scaled by 1/sqrt(2) per component.
pub fn crandn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn crandn_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_shape_fn((rows, cols), |_| crandn(rng))
}

pub fn crandn_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVec {
    CVec::from_shape_fn(len, |_| crandn(rng))
}

/// Uniform unit-modulus complex sample.
pub fn crand_phase<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    Complex::from_polar(1.0, theta)
}
