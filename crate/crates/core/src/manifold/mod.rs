//! Riemannian manifold machinery: fixed-rank and complex-circle manifolds
//! plus a conjugate-gradient driver with Armijo backtracking.
//!
//! Conventions: cost functions are real-valued over complex points, and
//! `euclidean_grad` returns the matrix/vector `G` such that the directional
//! derivative along `D` equals `Re⟨G, D⟩` (twice the Wirtinger gradient with
//! respect to the conjugate variable).

pub mod circle;
pub mod fixed_rank;

pub use circle::{CircleManifold, CirclePoint};
pub use fixed_rank::{FixedRankManifold, FixedRankPoint, FixedRankTangent};

use crate::error::{Error, Result};

/// A Riemannian manifold with the operations the CG driver needs.
pub trait Manifold {
    type Point: Clone;
    type Tangent: Clone;
    /// Ambient (embedding space) representation used for gradients.
    type Ambient;

    /// Orthogonal projection of an ambient vector onto the tangent space at `x`.
    fn project(&self, x: &Self::Point, z: &Self::Ambient) -> Self::Tangent;

    /// Retraction: move from `x` along `step * t` back onto the manifold.
    fn retract(&self, x: &Self::Point, t: &Self::Tangent, step: f64) -> Result<Self::Point>;

    /// Riemannian inner product (restriction of the real ambient inner product).
    fn inner(&self, x: &Self::Point, a: &Self::Tangent, b: &Self::Tangent) -> f64;

    /// Embed a tangent vector back into ambient coordinates.
    fn tangent_to_ambient(&self, x: &Self::Point, t: &Self::Tangent) -> Self::Ambient;

    /// `a * t1 + b * t2` within one tangent space.
    fn lincomb(
        &self,
        a: f64,
        t1: &Self::Tangent,
        b: f64,
        t2: &Self::Tangent,
    ) -> Self::Tangent;

    fn scale(&self, a: f64, t: &Self::Tangent) -> Self::Tangent;

    /// Ambient norm of the point, used to scale the first trial step.
    fn point_norm(&self, x: &Self::Point) -> f64;

    fn norm(&self, x: &Self::Point, t: &Self::Tangent) -> f64 {
        self.inner(x, t, t).max(0.0).sqrt()
    }
}

/// Cost + Euclidean gradient callables for [`riemannian_cg`].
pub trait Problem<M: Manifold> {
    fn cost(&self, x: &M::Point) -> f64;
    fn euclidean_grad(&self, x: &M::Point) -> M::Ambient;
}

/// Options for the conjugate-gradient driver.
#[derive(Debug, Clone)]
pub struct CgOptions {
    pub max_iters: usize,
    /// Stop when the Riemannian gradient norm falls below `grad_tol` times
    /// the initial gradient norm of the run (scale-free).
    pub grad_tol: f64,
    /// Stop when the relative cost decrease falls below this.
    pub rel_cost_tol: f64,
    pub armijo_c1: f64,
    pub shrink: f64,
    pub max_ls_steps: usize,
    /// First trial step; `None` picks `0.1 * (1 + |x|) / |d|`.
    pub initial_step: Option<f64>,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            max_iters: 500,
            grad_tol: 1e-6,
            rel_cost_tol: 1e-8,
            armijo_c1: 1e-4,
            shrink: 0.5,
            max_ls_steps: 40,
            initial_step: None,
        }
    }
}

/// Per-run convergence record.
#[derive(Debug, Clone)]
pub struct CgTrace {
    pub costs: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Internal iteration state of the conjugate-gradient driver.
pub struct CgState<M: Manifold> {
    pub point: M::Point,
    pub grad: M::Tangent,
    pub direction: M::Tangent,
    pub prev_grad: Option<M::Tangent>,
    pub step: f64,
    pub iteration: usize,
}

/// Riemannian conjugate gradient (Polak-Ribiere+ with automatic restart and
/// Armijo backtracking line search).
///
/// Returns the final point and the per-iteration cost trace. The cost trace
/// is non-increasing across accepted iterations.
pub fn riemannian_cg<M, P>(
    manifold: &M,
    problem: &P,
    x0: M::Point,
    opts: &CgOptions,
) -> Result<(M::Point, CgTrace)>
where
    M: Manifold,
    P: Problem<M>,
{
    let mut f = problem.cost(&x0);
    if !f.is_finite() {
        return Err(Error::NonFinite("initial cost"));
    }
    let g0 = manifold.project(&x0, &problem.euclidean_grad(&x0));
    let mut state = CgState::<M> {
        direction: manifold.scale(-1.0, &g0),
        grad: g0,
        prev_grad: None,
        point: x0,
        step: 0.0,
        iteration: 0,
    };
    let mut gg = manifold.inner(&state.point, &state.grad, &state.grad);
    if !gg.is_finite() {
        return Err(Error::NonFinite("initial gradient"));
    }

    let mut trace = CgTrace {
        costs: Vec::new(),
        grad_norms: Vec::new(),
        iterations: 0,
        converged: false,
    };
    let mut step_init = opts.initial_step.unwrap_or(0.0);
    let grad_floor = opts.grad_tol * gg.sqrt();

    for iter in 0..opts.max_iters {
        state.iteration = iter;
        trace.costs.push(f);
        trace.grad_norms.push(gg.sqrt());
        trace.iterations = iter;
        if gg.sqrt() <= grad_floor {
            trace.converged = true;
            break;
        }

        // Restart on a non-descent direction.
        let mut dg = manifold.inner(&state.point, &state.direction, &state.grad);
        if !(dg < 0.0) {
            state.direction = manifold.scale(-1.0, &state.grad);
            dg = -gg;
        }

        let dnorm = manifold.norm(&state.point, &state.direction);
        if dnorm == 0.0 {
            trace.converged = true;
            break;
        }
        // First trial step: previous accepted step, else a Cauchy-like guess
        // (exact for a quadratic with zero optimum) capped by the point scale.
        let mut t = if step_init > 0.0 {
            step_init
        } else {
            let cauchy = 2.0 * f.abs() / dg.abs().max(f64::MIN_POSITIVE);
            let scale_cap = 10.0 * (1.0 + manifold.point_norm(&state.point)) / dnorm;
            cauchy.min(scale_cap).max(f64::MIN_POSITIVE)
        };

        let mut accepted: Option<(M::Point, f64)> = None;
        let mut steepest_retry = false;
        loop {
            for _ in 0..opts.max_ls_steps {
                match manifold.retract(&state.point, &state.direction, t) {
                    Ok(cand) => {
                        let fc = problem.cost(&cand);
                        if fc.is_finite() && fc <= f + opts.armijo_c1 * t * dg {
                            accepted = Some((cand, fc));
                            break;
                        }
                    }
                    // Degenerate retraction (e.g. rank collapse): halve the step.
                    Err(Error::DegenerateStep(_)) => {}
                    Err(e) => return Err(e),
                }
                t *= opts.shrink;
            }
            if accepted.is_some() || steepest_retry {
                break;
            }
            // Fall back to a steepest-descent direction once.
            steepest_retry = true;
            state.direction = manifold.scale(-1.0, &state.grad);
            dg = -gg;
            t = 2.0 * f.abs() / dg.abs().max(f64::MIN_POSITIVE);
            t = t
                .min(10.0 * (1.0 + manifold.point_norm(&state.point)) / gg.sqrt().max(1e-300))
                .max(f64::MIN_POSITIVE);
        }

        let Some((x_new, f_new)) = accepted else {
            // No admissible step remains; report the best point found.
            break;
        };

        let g_new_amb = problem.euclidean_grad(&x_new);
        let g_new = manifold.project(&x_new, &g_new_amb);
        let gg_new = manifold.inner(&x_new, &g_new, &g_new);
        if !gg_new.is_finite() || !f_new.is_finite() {
            return Err(Error::NonFinite("gradient during iteration"));
        }

        // Polak-Ribiere+ with projection transport.
        let g_old_amb = manifold.tangent_to_ambient(&state.point, &state.grad);
        let g_old_tr = manifold.project(&x_new, &g_old_amb);
        let y = manifold.lincomb(1.0, &g_new, -1.0, &g_old_tr);
        let beta = (manifold.inner(&x_new, &g_new, &y) / gg).max(0.0);
        let d_amb = manifold.tangent_to_ambient(&state.point, &state.direction);
        let d_tr = manifold.project(&x_new, &d_amb);
        let new_dir = manifold.lincomb(-1.0, &g_new, beta, &d_tr);

        let rel_drop = (f - f_new) / f.abs().max(f64::MIN_POSITIVE);
        state.prev_grad = Some(std::mem::replace(&mut state.grad, g_new));
        state.point = x_new;
        state.direction = new_dir;
        state.step = t;
        f = f_new;
        gg = gg_new;
        step_init = t * 2.0;

        if rel_drop.abs() < opts.rel_cost_tol {
            trace.converged = true;
            break;
        }
    }
    if trace.costs.last() != Some(&f) {
        trace.costs.push(f);
        trace.grad_norms.push(gg.sqrt());
    }

    Ok((state.point, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, adjoint, crandn_mat, fro_inner_re, fro_norm, CMat};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// min ||X - A||^2 over the fixed-rank manifold.
    struct NearestTo {
        a: CMat,
    }
    impl Problem<FixedRankManifold> for NearestTo {
        fn cost(&self, x: &FixedRankPoint) -> f64 {
            let d = &x.to_matrix() - &self.a;
            d.iter().map(|z| z.norm_sqr()).sum()
        }
        fn euclidean_grad(&self, x: &FixedRankPoint) -> CMat {
            (&x.to_matrix() - &self.a).mapv(|z| z * 2.0)
        }
    }

    #[test]
    fn cg_converges_to_full_rank_target() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let a = crandn_mat(&mut rng, 5, 4);
        let man = FixedRankManifold::new(5, 4, 4);
        let x0 = FixedRankPoint::random(&mut rng, 5, 4, 4);
        let (x, trace) = riemannian_cg(
            &man,
            &NearestTo { a: a.clone() },
            x0,
            &CgOptions {
                grad_tol: 1e-9,
                rel_cost_tol: 1e-14,
                ..CgOptions::default()
            },
        )
        .unwrap();
        let final_cost = {
            let d = &x.to_matrix() - &a;
            d.iter().map(|z| z.norm_sqr()).sum::<f64>()
        };
        assert!(final_cost < 1e-12, "cost {final_cost}, {} iters", trace.iterations);
    }

    #[test]
    fn cg_matches_truncated_svd_optimum() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let a = crandn_mat(&mut rng, 6, 5);
        let m = 2;
        let dec = linalg::decomp::svd(&a);
        let best: f64 = dec.s.iter().skip(m).map(|s| s * s).sum();
        let man = FixedRankManifold::new(6, 5, m);
        let x0 = FixedRankPoint::random(&mut rng, 6, 5, m);
        let (x, _) = riemannian_cg(
            &man,
            &NearestTo { a: a.clone() },
            x0,
            &CgOptions {
                max_iters: 5000,
                grad_tol: 1e-10,
                rel_cost_tol: 1e-13,
                ..CgOptions::default()
            },
        )
        .unwrap();
        let cost = {
            let d = &x.to_matrix() - &a;
            d.iter().map(|z| z.norm_sqr()).sum::<f64>()
        };
        assert!(
            (cost - best).abs() < 1e-8,
            "Eckart-Young gap: cost {cost} vs best {best}"
        );
    }

    #[test]
    fn cg_trace_monotone() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let a = crandn_mat(&mut rng, 8, 6);
        let man = FixedRankManifold::new(8, 6, 3);
        let x0 = FixedRankPoint::random(&mut rng, 8, 6, 3);
        let (_, trace) = riemannian_cg(&man, &NearestTo { a }, x0, &CgOptions::default()).unwrap();
        for w in trace.costs.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "trace must not increase: {w:?}");
        }
    }

    #[test]
    fn cg_zero_iterations_returns_start() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let a = crandn_mat(&mut rng, 4, 4);
        let man = FixedRankManifold::new(4, 4, 2);
        let x0 = FixedRankPoint::random(&mut rng, 4, 4, 2);
        let x0m = x0.to_matrix();
        let opts = CgOptions {
            max_iters: 0,
            ..CgOptions::default()
        };
        let (x, trace) = riemannian_cg(&man, &NearestTo { a }, x0, &opts).unwrap();
        assert_eq!(trace.iterations, 0);
        assert!(fro_norm(&(&x.to_matrix() - &x0m)) == 0.0);
    }

    /// Finite-difference check of the gradient convention used by the driver:
    /// d/dt f(x + t D) must equal Re⟨euclidean_grad, D⟩.
    #[test]
    fn gradient_convention_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let a = crandn_mat(&mut rng, 5, 4);
        let prob = NearestTo { a };
        let x = crandn_mat(&mut rng, 5, 4);
        let cost = |m: &CMat| -> f64 {
            let d = m - &prob.a;
            d.iter().map(|z| z.norm_sqr()).sum()
        };
        let grad = (&x - &prob.a).mapv(|z| z * 2.0);
        let h = 1e-6;
        for _ in 0..20 {
            let dir = crandn_mat(&mut rng, 5, 4);
            let fp = cost(&(&x + &dir.mapv(|z| z * h)));
            let fm = cost(&(&x - &dir.mapv(|z| z * h)));
            let fd = (fp - fm) / (2.0 * h);
            let an = fro_inner_re(&grad, &dir);
            assert!(
                (fd - an).abs() <= 1e-5 * an.abs().max(1.0),
                "fd {fd} vs analytic {an}"
            );
        }
        // Silence unused warning for adjoint import used elsewhere in tests.
        let _ = adjoint(&x);
    }
}
