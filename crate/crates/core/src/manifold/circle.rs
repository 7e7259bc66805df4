//! Complex circle manifold: vectors with unit-modulus entries.

use crate::error::{Error, Result};
use crate::linalg::CVec;

use super::Manifold;

/// A point on the product of complex circles, `|x_i| = 1` for every entry.
pub type CirclePoint = CVec;

#[derive(Debug, Clone)]
pub struct CircleManifold {
    pub len: usize,
}

impl CircleManifold {
    pub fn new(len: usize) -> Self {
        CircleManifold { len }
    }

    /// Check the unit-modulus constraint.
    pub fn is_feasible(x: &CirclePoint, tol: f64) -> bool {
        x.iter().all(|z| (z.norm() - 1.0).abs() <= tol)
    }
}

impl Manifold for CircleManifold {
    type Point = CirclePoint;
    type Tangent = CVec;
    type Ambient = CVec;

    fn project(&self, x: &CirclePoint, z: &CVec) -> CVec {
        // t_i = z_i - Re(z_i conj(x_i)) x_i
        let mut t = z.clone();
        for (ti, xi) in t.iter_mut().zip(x.iter()) {
            let r = (*ti * xi.conj()).re;
            *ti -= xi * r;
        }
        t
    }

    fn retract(&self, x: &CirclePoint, t: &CVec, step: f64) -> Result<CirclePoint> {
        let mut y = CVec::zeros(x.len());
        for i in 0..x.len() {
            let cand = x[i] + t[i] * step;
            let n = cand.norm();
            if n < 1e-300 {
                return Err(Error::DegenerateStep(format!(
                    "entry {i} vanished before renormalization"
                )));
            }
            y[i] = cand / n;
        }
        Ok(y)
    }

    fn inner(&self, _x: &CirclePoint, a: &CVec, b: &CVec) -> f64 {
        a.iter().zip(b.iter()).map(|(p, q)| (p.conj() * q).re).sum()
    }

    fn tangent_to_ambient(&self, _x: &CirclePoint, t: &CVec) -> CVec {
        t.clone()
    }

    fn lincomb(&self, a: f64, t1: &CVec, b: f64, t2: &CVec) -> CVec {
        t1.mapv(|z| z * a) + t2.mapv(|z| z * b)
    }

    fn scale(&self, a: f64, t: &CVec) -> CVec {
        t.mapv(|z| z * a)
    }

    fn point_norm(&self, x: &CirclePoint) -> f64 {
        (x.len() as f64).sqrt()
    }
}
