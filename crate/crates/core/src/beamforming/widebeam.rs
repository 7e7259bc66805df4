//! Offline STE phase design: wide-beam synthesis over the UE location area.
//!
//! The cumulative directivity gain over the area separates into y- and
//! z-axis quadratic forms after the change of variables
//! `ρ_y = sin ϑ sin ζ - sin θ_r sin φ_r`, `ρ_z = cos ζ - cos φ_r`; each axis
//! is then maximized independently on the complex circle manifold.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::channel::{upa_response, AngleArea, SystemConfig};
use crate::error::Result;
use crate::linalg::{kron_vec, CMat, CVec, C64};
use crate::manifold::{riemannian_cg, CgOptions, CircleManifold, CirclePoint, Problem};

/// Which STE panel axis a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Y,
    Z,
}

/// Geometry of the wide-beam problem: fixed arrival direction, UE area, and
/// the derived per-axis integration intervals.
#[derive(Debug, Clone)]
pub struct WideBeamSpec {
    /// Azimuth/elevation of the fixed LoS arrival at the STE panel.
    pub arrival_azimuth: f64,
    pub arrival_elevation: f64,
    pub area: AngleArea,
    pub n_ste_y: usize,
    pub n_z: usize,
    pub rho_y: (f64, f64),
    pub rho_z: (f64, f64),
}

impl WideBeamSpec {
    pub fn new(
        arrival_azimuth: f64,
        arrival_elevation: f64,
        area: AngleArea,
        n_ste_y: usize,
        n_z: usize,
    ) -> Self {
        let s0 = arrival_azimuth.sin() * arrival_elevation.sin();
        // sin is monotone over the azimuth range [-π/2, π/2].
        let u = (area.azimuth.0.sin(), area.azimuth.1.sin());
        // sin ζ over [0, π]: maximum 1 if the interval crosses π/2.
        let v_lo = area.elevation.0.sin().min(area.elevation.1.sin());
        let v_hi = if area.elevation.0 <= std::f64::consts::FRAC_PI_2
            && area.elevation.1 >= std::f64::consts::FRAC_PI_2
        {
            1.0
        } else {
            area.elevation.0.sin().max(area.elevation.1.sin())
        };
        let corners = [u.0 * v_lo, u.0 * v_hi, u.1 * v_lo, u.1 * v_hi];
        let p_min = corners.iter().cloned().fold(f64::INFINITY, f64::min);
        let p_max = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // cos ζ is decreasing on [0, π].
        let c0 = arrival_elevation.cos();
        let rho_z = (area.elevation.1.cos() - c0, area.elevation.0.cos() - c0);
        WideBeamSpec {
            arrival_azimuth,
            arrival_elevation,
            area,
            n_ste_y,
            n_z,
            rho_y: (p_min - s0, p_max - s0),
            rho_z,
        }
    }

    /// Spec for a scenario config: STE panel dims, its LoS arrival angles and
    /// the UE area.
    pub fn from_config(cfg: &SystemConfig) -> Self {
        WideBeamSpec::new(
            cfg.los.irs_azimuth,
            cfg.los.irs_elevation,
            cfg.ue_area,
            cfg.n_ste_y,
            cfg.n_z,
        )
    }

    fn axis_dims(&self, axis: Axis) -> (usize, (f64, f64)) {
        match axis {
            Axis::Y => (self.n_ste_y, self.rho_y),
            Axis::Z => (self.n_z, self.rho_z),
        }
    }
}

/// Directivity gain `|a_STE^H(ϑ, ζ) diag(ω) a_STE(θ_r, φ_r)|²` of the STE
/// panel for a departure direction.
pub fn directivity_gain(
    spec: &WideBeamSpec,
    omega: &CVec,
    departure_azimuth: f64,
    departure_elevation: f64,
) -> f64 {
    let a_dep = upa_response(departure_azimuth, departure_elevation, spec.n_ste_y, spec.n_z);
    let a_arr = upa_response(
        spec.arrival_azimuth,
        spec.arrival_elevation,
        spec.n_ste_y,
        spec.n_z,
    );
    let acc: C64 = a_dep
        .iter()
        .zip(omega.iter())
        .zip(a_arr.iter())
        .map(|((d, w), r)| d.conj() * w * r)
        .sum();
    acc.norm_sqr()
}

/// Normalized per-axis phase vector `b(ρ)` with entries `e^{jπkρ} / sqrt(n)`.
pub fn axis_phase_vector(rho: f64, n: usize) -> CVec {
    CVec::from_shape_fn(n, |k| {
        Complex::from_polar(1.0 / (n as f64), std::f64::consts::PI * k as f64 * rho)
    })
}

/// Rank-one axis gain matrix `B(ρ) = n · v(ρ) v(ρ)^H` with `v_k = e^{jπkρ}`
/// (the integrand of the closed-form cumulative gain matrix).
pub fn axis_gain_matrix(rho: f64, n: usize) -> CMat {
    CMat::from_shape_fn((n, n), |(p, q)| {
        Complex::from_polar(n as f64, std::f64::consts::PI * (p as f64 - q as f64) * rho)
    })
}

/// Closed-form cumulative gain matrix for one axis:
/// diagonal `n (ρ_max - ρ_min)`, off-diagonal
/// `n (e^{jπ(p-q)ρ_max} - e^{jπ(p-q)ρ_min}) / (jπ(p-q))`.
pub fn xi_matrix(axis: Axis, spec: &WideBeamSpec) -> CMat {
    let (n, (lo, hi)) = spec.axis_dims(axis);
    let nf = n as f64;
    CMat::from_shape_fn((n, n), |(p, q)| {
        if p == q {
            Complex::new(nf * (hi - lo), 0.0)
        } else {
            let k = p as f64 - q as f64;
            let e_hi = Complex::from_polar(1.0, std::f64::consts::PI * k * hi);
            let e_lo = Complex::from_polar(1.0, std::f64::consts::PI * k * lo);
            (e_hi - e_lo) * nf / (Complex::new(0.0, std::f64::consts::PI * k))
        }
    })
}

/// Entrywise adaptive-Simpson integration of [`axis_gain_matrix`] over the
/// axis interval; the quadrature oracle for [`xi_matrix`].
pub fn xi_matrix_quadrature(axis: Axis, spec: &WideBeamSpec, tol: f64) -> CMat {
    let (n, (lo, hi)) = spec.axis_dims(axis);
    let mut out = CMat::zeros((n, n));
    // Entries depend only on p - q; integrate each diagonal offset once.
    for k in -(n as i64 - 1)..=(n as i64 - 1) {
        let f = |rho: f64| Complex::from_polar(n as f64, std::f64::consts::PI * k as f64 * rho);
        let val = adaptive_simpson(&f, lo, hi, tol, 30);
        for p in 0..n {
            let q = p as i64 - k;
            if q >= 0 && (q as usize) < n {
                out[(p, q as usize)] = val;
            }
        }
    }
    out
}

fn adaptive_simpson<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> C64 {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (fa + fm * 4.0 + fb) * ((b - a) / 6.0);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> C64>(
    f: &F,
    a: f64,
    b: f64,
    fa: C64,
    fm: C64,
    fb: C64,
    whole: C64,
    tol: f64,
    depth: usize,
) -> C64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
    let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1)
    }
}

/// Options for the wide-beam synthesizer.
#[derive(Debug, Clone)]
pub struct WbsOptions {
    /// Random multi-start count; the best run is kept.
    pub restarts: usize,
    pub cg: CgOptions,
    pub seed: u64,
}

impl Default for WbsOptions {
    fn default() -> Self {
        WbsOptions {
            restarts: 8,
            cg: CgOptions {
                max_iters: 300,
                ..CgOptions::default()
            },
            seed: 0x5745_4253, // "WBS"
        }
    }
}

struct QuadraticForm<'a> {
    xi: &'a CMat,
}

impl Problem<CircleManifold> for QuadraticForm<'_> {
    fn cost(&self, x: &CirclePoint) -> f64 {
        -quadratic_form(self.xi, x)
    }
    fn euclidean_grad(&self, x: &CirclePoint) -> CVec {
        // d(-ω^H Ξ ω) along D is 2 Re⟨-Ξω, D⟩.
        self.xi.dot(x).mapv(|z| z * -2.0)
    }
}

/// `Re(ω^H Ξ ω)` (real for Hermitian Ξ).
pub fn quadratic_form(xi: &CMat, omega: &CVec) -> f64 {
    let xw = xi.dot(omega);
    omega
        .iter()
        .zip(xw.iter())
        .map(|(w, y)| (w.conj() * y).re)
        .sum()
}

/// Result of the wide-beam synthesis.
#[derive(Debug, Clone)]
pub struct WideBeam {
    pub omega: CVec,
    pub omega_y: CVec,
    pub omega_z: CVec,
    /// Achieved `ω_y^H Ξ_y ω_y` and `ω_z^H Ξ_z ω_z`.
    pub gains: (f64, f64),
}

/// Maximize the per-axis cumulative gains on the circle manifold and return
/// `ω = ω_y ⊗ ω_z`.
pub fn wbs_mo(spec: &WideBeamSpec, opts: &WbsOptions) -> Result<WideBeam> {
    let xi_y = xi_matrix(Axis::Y, spec);
    let xi_z = xi_matrix(Axis::Z, spec);
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let omega_y = maximize_axis(&xi_y, opts, &mut rng)?;
    let omega_z = maximize_axis(&xi_z, opts, &mut rng)?;
    let gains = (
        quadratic_form(&xi_y, &omega_y),
        quadratic_form(&xi_z, &omega_z),
    );
    Ok(WideBeam {
        omega: kron_vec(&omega_y, &omega_z),
        omega_y,
        omega_z,
        gains,
    })
}

fn maximize_axis<R: Rng + ?Sized>(xi: &CMat, opts: &WbsOptions, rng: &mut R) -> Result<CVec> {
    let n = xi.nrows();
    if n == 1 {
        return Ok(CVec::from_elem(1, Complex::new(1.0, 0.0)));
    }
    let man = CircleManifold::new(n);
    let problem = QuadraticForm { xi };
    let mut best: Option<(f64, CVec)> = None;
    for _ in 0..opts.restarts.max(1) {
        let x0 = CVec::from_shape_fn(n, |_| {
            Complex::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
        });
        let (x, _) = riemannian_cg(&man, &problem, x0, &opts.cg)?;
        let val = quadratic_form(xi, &x);
        if best.as_ref().map_or(true, |(b, _)| val > *b) {
            best = Some((val, x));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// Random unit-modulus STE phases (the ablation baseline).
pub fn random_ste_phases<R: Rng + ?Sized>(n_ste: usize, rng: &mut R) -> CVec {
    CVec::from_shape_fn(n_ste, |_| {
        Complex::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
    })
}
