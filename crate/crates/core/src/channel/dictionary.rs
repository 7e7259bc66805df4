//! Overcomplete angular-domain dictionaries on uniform grids.
//!
//! Grid points are `u_i = -1 + (i-1) * 2/G` (1-based `i`). The STE y-axis
//! dictionary carries the adjacent-panel phase offset `e^{jπ(N_DTE_y - 1)u}`
//! on each column so its codewords are referenced to the full surface.

use num_complex::Complex;

use super::arrays::ula_response;
use super::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{kron, CMat};

/// Grid sizes per axis; every resolution must be at least the matching
/// array dimension.
#[derive(Debug, Clone, Copy)]
pub struct DictionaryResolutions {
    pub bs: usize,
    pub ue: usize,
    pub dte_y: usize,
    pub dte_z: usize,
    pub ste_y: usize,
    pub ste_z: usize,
}

impl DictionaryResolutions {
    /// Critical (unitary) resolutions: grid size equals array size.
    pub fn critical(cfg: &SystemConfig) -> Self {
        DictionaryResolutions {
            bs: cfg.n_bs,
            ue: cfg.n_ue,
            dte_y: cfg.n_dte_y,
            dte_z: cfg.n_z,
            ste_y: cfg.n_ste_y,
            ste_z: if cfg.n_ste_y == 0 { 0 } else { cfg.n_z },
        }
    }
}

/// Angular dictionaries for the BS, UE, DTE panel and STE panel.
#[derive(Debug, Clone)]
pub struct Dictionaries {
    pub a_bs: CMat,
    pub a_ue: CMat,
    /// `A_DTE = A_DTE_y ⊗ A_DTE_z`.
    pub a_dte: CMat,
    /// `A_STE = A_STE_y ⊗ A_STE_z`, y columns phase-offset by the panel split.
    pub a_ste: CMat,
    pub resolutions: DictionaryResolutions,
}

/// Uniform grid `u_i = -1 + (i-1) * 2/G`.
pub fn grid(g: usize) -> Vec<f64> {
    (0..g).map(|i| -1.0 + i as f64 * 2.0 / g as f64).collect()
}

fn ula_dictionary(m: usize, g: usize) -> CMat {
    let pts = grid(g);
    let mut a = CMat::zeros((m, g));
    for (j, &u) in pts.iter().enumerate() {
        a.column_mut(j).assign(&ula_response(u, m));
    }
    a
}

pub fn build_dictionaries(cfg: &SystemConfig, res: &DictionaryResolutions) -> Result<Dictionaries> {
    let checks = [
        ("bs", res.bs, cfg.n_bs),
        ("ue", res.ue, cfg.n_ue),
        ("dte_y", res.dte_y, cfg.n_dte_y),
        ("dte_z", res.dte_z, cfg.n_z),
        ("ste_y", res.ste_y, cfg.n_ste_y),
    ];
    for (name, g, n) in checks {
        if g < n {
            return Err(Error::Config(format!(
                "dictionary resolution {name} = {g} below array dimension {n}"
            )));
        }
    }

    let a_bs = ula_dictionary(cfg.n_bs, res.bs);
    let a_ue = ula_dictionary(cfg.n_ue, res.ue);

    let a_dte_y = ula_dictionary(cfg.n_dte_y, res.dte_y);
    let a_dte_z = ula_dictionary(cfg.n_z, res.dte_z);
    let a_dte = kron(&a_dte_y, &a_dte_z);

    let a_ste = if cfg.n_ste_y == 0 {
        CMat::zeros((0, 0))
    } else {
        let mut a_ste_y = ula_dictionary(cfg.n_ste_y, res.ste_y);
        let offset = cfg.n_dte_y as f64 - 1.0;
        for (j, &u) in grid(res.ste_y).iter().enumerate() {
            let phase = Complex::from_polar(1.0, std::f64::consts::PI * offset * u);
            a_ste_y.column_mut(j).mapv_inplace(|z| z * phase);
        }
        let a_ste_z = ula_dictionary(cfg.n_z, res.ste_z);
        kron(&a_ste_y, &a_ste_z)
    };

    Ok(Dictionaries {
        a_bs,
        a_ue,
        a_dte,
        a_ste,
        resolutions: *res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::small_cfg;
    use crate::linalg::{adjoint, eye, fro_norm};

    #[test]
    fn first_grid_point_is_minus_one() {
        let pts = grid(8);
        assert_eq!(pts[0], -1.0);
        assert!((pts[1] - (-0.75)).abs() < 1e-15);
    }

    #[test]
    fn critical_dictionaries_are_unitary() {
        let cfg = small_cfg();
        let res = DictionaryResolutions::critical(&cfg);
        let d = build_dictionaries(&cfg, &res).unwrap();
        let defect_bs = fro_norm(&(&adjoint(&d.a_bs).dot(&d.a_bs) - &eye(cfg.n_bs)));
        let defect_ue = fro_norm(&(&adjoint(&d.a_ue).dot(&d.a_ue) - &eye(cfg.n_ue)));
        assert!(defect_bs < 1e-10, "A_BS defect {defect_bs}");
        assert!(defect_ue < 1e-10, "A_UE defect {defect_ue}");
    }

    #[test]
    fn dte_dictionary_is_kron_of_axes() {
        let cfg = small_cfg();
        let res = DictionaryResolutions::critical(&cfg);
        let d = build_dictionaries(&cfg, &res).unwrap();
        let ay = ula_dictionary(cfg.n_dte_y, res.dte_y);
        let az = ula_dictionary(cfg.n_z, res.dte_z);
        let k = kron(&ay, &az);
        assert!(fro_norm(&(&d.a_dte - &k)) < 1e-14);
        assert_eq!(d.a_dte.dim(), (cfg.n_dte(), res.dte_y * res.dte_z));
    }

    #[test]
    fn ste_columns_have_unit_norm_and_offset() {
        let cfg = small_cfg();
        let res = DictionaryResolutions::critical(&cfg);
        let d = build_dictionaries(&cfg, &res).unwrap();
        for j in 0..d.a_ste.ncols() {
            let col = d.a_ste.column(j);
            let n: f64 = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        // First row of the y factor equals the offset phase / sqrt(N_STE_y)
        // times the z response; check the offset phase explicitly.
        let us = grid(res.ste_y);
        let off = cfg.n_dte_y as f64 - 1.0;
        for (jy, &u) in us.iter().enumerate() {
            let expect = Complex::from_polar(
                1.0 / ((cfg.n_ste_y as f64).sqrt() * (cfg.n_z as f64).sqrt()),
                std::f64::consts::PI * off * u,
            );
            // Entry (0,0) of the (jy, jz = 0) column block.
            let col = jy * res.ste_z;
            assert!((d.a_ste[(0, col)] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn resolution_below_dimension_rejected() {
        let cfg = small_cfg();
        let mut res = DictionaryResolutions::critical(&cfg);
        res.bs = cfg.n_bs - 1;
        assert!(build_dictionaries(&cfg, &res).is_err());
    }
}
