//! Array response vectors for ULAs and UPAs (half-wavelength spacing).

use num_complex::Complex;

use crate::linalg::{kron_vec, CVec};

/// ULA response `a(u, M) = [1, e^{jπu}, ..., e^{jπ(M-1)u}] / sqrt(M)`.
pub fn ula_response(u: f64, m: usize) -> CVec {
    assert!(m >= 1, "array needs at least one element");
    let norm = 1.0 / (m as f64).sqrt();
    CVec::from_shape_fn(m, |i| {
        Complex::from_polar(norm, std::f64::consts::PI * i as f64 * u)
    })
}

/// UPA response `a_y(θ, φ) ⊗ a_z(φ)` with `a_y = a(sinθ sinφ, N_y)` and
/// `a_z = a(cosφ, N_z)`.
pub fn upa_response(azimuth: f64, elevation: f64, ny: usize, nz: usize) -> CVec {
    upa_response_scaled(azimuth, elevation, ny, nz, 1.0)
}

/// UPA response with an element-spacing scale `kappa = 2 d / λ` (1 at λ/2).
pub fn upa_response_scaled(
    azimuth: f64,
    elevation: f64,
    ny: usize,
    nz: usize,
    kappa: f64,
) -> CVec {
    let uy = kappa * azimuth.sin() * elevation.sin();
    let uz = kappa * elevation.cos();
    kron_vec(&ula_response(uy, ny), &ula_response(uz, nz))
}
