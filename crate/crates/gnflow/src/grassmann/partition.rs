//! The final integral `Z = int e^{S_f} dmu_{G_f}` on a small grid of the unit torus.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{all_sites, bilinear, gaussian_integrate, h_final, Element, FiniteCovariance, Grid};
use crate::error::{invalid, Error, Result};
use crate::kernels::{eval_kernel, KernelKind, TorusSpec};
use crate::spin::{gamma_basis, SpinMatrix};

/// Largest number of `psi` modes evaluated exactly (total degree twice this).
pub const Z_MAX_MODES: usize = 8;

pub const OMITTED_TERMS: &str =
    "the regular quadratic terms and the irrelevant part E_N are not materialized; their norms are O(g_f^2)";

/// Couplings of the final action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalCouplings {
    pub g: f64,
    pub z: f64,
    pub p: f64,
    pub v: f64,
}

impl FinalCouplings {
    pub fn zero() -> Self {
        Self { g: 0.0, z: 0.0, p: 0.0, v: 0.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionReport {
    pub couplings: FinalCouplings,
    pub grid: [usize; 2],
    pub psi_modes: usize,
    pub max_degree: usize,
    pub z: f64,
    pub z_minus_one: f64,
    pub imaginary_part: f64,
    pub h: f64,
    pub action_norm: f64,
    /// `e^{||S_f||_h} - 1`.
    pub bound: f64,
    pub omitted: String,
}

impl PartitionReport {
    pub fn in_band(&self) -> bool {
        (0.5..=1.5).contains(&self.z)
    }

    pub fn bound_holds(&self) -> bool {
        self.z_minus_one.abs() <= self.bound
    }
}

fn to_array(m: &SpinMatrix) -> [[Complex64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// `G_f(x) = sum_{p in 2 pi Z^2, p != 0} e^{ipx} (-i pslash/p^2) e^{-p^2}` on the unit torus.
pub fn final_covariance(grid: Grid, tol: f64) -> Result<FiniteCovariance> {
    let unit = TorusSpec::new(2, 0, 2)?;
    FiniteCovariance::sampled(grid, |x| eval_kernel(&KernelKind::G { k: 0 }, x, &unit, tol))
}

/// `S_f = sum_x w [-z psibar dslash psi + g (psibar psi)^2 + p (psibar g5 psi)^2 + v sum_mu (psibar g_mu psi)^2]`
/// with central differences and one internal component.
pub fn final_action(c: &FinalCouplings, grid: &Grid) -> Result<Element> {
    let gb = gamma_basis();
    let w = Complex64::new(grid.cell_area(), 0.0);
    let modes = |p: usize| [2 * p, 2 * p + 1];
    let mut s = Element::zero();
    for x in 0..grid.points() {
        let bar = modes(x);
        for mu in 0..2 {
            if grid.m[mu] < 3 {
                continue;
            }
            let k = gb.mu(mu) * Complex64::new(-c.z * 0.5 / grid.spacing(mu), 0.0);
            let fwd = bilinear(&bar, &to_array(&k), &modes(grid.shift(x, mu, 1)))?;
            let bwd = bilinear(&bar, &to_array(&k), &modes(grid.shift(x, mu, -1)))?;
            s = s.add(&fwd.sub(&bwd).scale(w));
        }
        let mut quartic = |m: SpinMatrix, coupling: f64| -> Result<()> {
            if coupling != 0.0 {
                let b = bilinear(&bar, &to_array(&m), &bar)?;
                s = s.add(&b.mul(&b).scale(w * coupling));
            }
            Ok(())
        };
        quartic(gb.identity(), c.g)?;
        quartic(gb.gamma5(), c.p)?;
        quartic(gb.mu(0), c.v)?;
        quartic(gb.mu(1), c.v)?;
    }
    Ok(s)
}

/// Exact evaluation of `Z` on an `m[0] x m[1]` grid of the unit torus.
pub fn partition_function_z(c: &FinalCouplings, dims: [usize; 2], tol: f64) -> Result<PartitionReport> {
    if [c.g, c.z, c.p, c.v].iter().any(|x| !x.is_finite()) {
        return invalid("couplings must be finite");
    }
    let grid = Grid::new(dims, [1.0, 1.0])?;
    let psi_modes = 2 * grid.points();
    if psi_modes > Z_MAX_MODES {
        return Err(Error::Capacity(format!(
            "grid {}x{} has {psi_modes} psi modes and needs degree {} in e^S; exact evaluation supports {} modes (degree {})",
            dims[0],
            dims[1],
            2 * psi_modes,
            Z_MAX_MODES,
            2 * Z_MAX_MODES
        )));
    }
    let s = final_action(c, &grid)?;
    let fluct = s.exp()?.sub(&Element::one());
    let sites = all_sites(&grid, 1);
    let cov = final_covariance(grid, tol)?.mode_covariance(&sites, &sites)?;
    let i = gaussian_integrate(&fluct, &cov, None)?.scalar_part();
    let h = h_final().h;
    let action_norm = s.surrogate_norm(h);
    Ok(PartitionReport {
        couplings: *c,
        grid: dims,
        psi_modes,
        max_degree: fluct.max_degree(),
        z: 1.0 + i.re,
        z_minus_one: i.re,
        imaginary_part: i.im,
        h,
        action_norm,
        bound: action_norm.exp_m1(),
        omitted: OMITTED_TERMS.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_theory_is_one() {
        let r = partition_function_z(&FinalCouplings::zero(), [3, 1], 1e-18).unwrap();
        assert_eq!((r.z, r.z_minus_one, r.action_norm), (1.0, 0.0, 0.0));
    }

    #[test]
    fn small_coupling_in_band() {
        let c = FinalCouplings { g: 0.01, z: 0.002, p: 1e-4, v: -1e-4 };
        let r = partition_function_z(&c, [3, 1], 1e-18).unwrap();
        assert!(r.in_band() && r.bound_holds(), "{r:?}");
        assert_eq!(r.max_degree, 12);
    }

    #[test]
    fn local_quartic_norm() {
        // one point of area 1: (psibar psi)^2 = 2 psibar_0 psi_0 psibar_1 psi_1
        let grid = Grid::new([1, 1], [1.0, 1.0]).unwrap();
        let s = final_action(&FinalCouplings { g: 1.0, ..FinalCouplings::zero() }, &grid).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.surrogate_norm(1.3) - 2.0 * 1.3f64.powi(4)).abs() < 1e-12);
    }

    #[test]
    fn capacity_diagnostic() {
        match partition_function_z(&FinalCouplings::zero(), [3, 3], 1e-18) {
            Err(Error::Capacity(m)) => assert!(m.contains("degree 36")),
            other => panic!("{other:?}"),
        }
    }
}
