//! Gaussian integration by determinants and a brute-force Berezin oracle.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::{merge_parity, parity_sign, Element, Key};
use crate::error::{invalid, Result};

/// Covariance `C(xi, eta)` between listed `psi` modes (rows) and `psibar` modes (columns).
#[derive(Clone, Debug)]
pub struct ModeCovariance {
    pub psi: Vec<usize>,
    pub bar: Vec<usize>,
    pub matrix: DMatrix<Complex64>,
}

impl ModeCovariance {
    pub fn new(psi: Vec<usize>, bar: Vec<usize>, matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != psi.len() || matrix.ncols() != bar.len() {
            return invalid(format!(
                "covariance is {}x{} but lists {} psi and {} psibar modes",
                matrix.nrows(),
                matrix.ncols(),
                psi.len(),
                bar.len()
            ));
        }
        Ok(Self { psi, bar, matrix })
    }

    /// Modes `0..n` of both species.
    pub fn square(matrix: DMatrix<Complex64>) -> Result<Self> {
        let (r, c) = matrix.shape();
        Self::new((0..r).collect(), (0..c).collect(), matrix)
    }

    fn masks(&self) -> Key {
        let m = |v: &[usize]| v.iter().fold(0u128, |acc, &i| acc | (1u128 << i));
        (m(&self.psi), m(&self.bar))
    }
}

/// `epsilon_n = (-1)^{n(n-1)/2}`, so `epsilon_1 = 1`, `epsilon_2 = -1`.
pub fn epsilon(n: usize) -> f64 {
    parity_sign((n * n.saturating_sub(1) / 2) as u32)
}

/// `int F dmu_C`; modes outside `cov` must be listed in `spectators` and pass through.
pub fn gaussian_integrate(f: &Element, cov: &ModeCovariance, spectators: Option<Key>) -> Result<Element> {
    let im = cov.masks();
    let sp = spectators.unwrap_or((0, 0));
    let row: HashMap<usize, usize> = cov.psi.iter().enumerate().map(|(r, &i)| (i, r)).collect();
    let col: HashMap<usize, usize> = cov.bar.iter().enumerate().map(|(r, &i)| (i, r)).collect();
    let mut dets: HashMap<Key, Complex64> = HashMap::new();
    let mut out = Element::zero();
    for (&(a, b), &c) in f.terms() {
        let (ai, bi) = (a & im.0 & !sp.0, b & im.1 & !sp.1);
        let (as_, bs) = (a & !ai, b & !bi);
        if as_ & !sp.0 != 0 || bs & !sp.1 != 0 {
            let (p, q) = Element::indices((as_ & !sp.0, bs & !sp.1));
            return invalid(format!("no covariance entry for psi modes {p:?} / psibar modes {q:?}"));
        }
        let n = ai.count_ones() as usize;
        if n != bi.count_ones() as usize {
            continue;
        }
        let det = *dets.entry((ai, bi)).or_insert_with(|| {
            let (rs, cs) = Element::indices((ai, bi));
            let m = DMatrix::from_fn(n, n, |r, s| cov.matrix[(row[&rs[r]], col[&cs[s]])]);
            if n == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                m.determinant()
            }
        });
        let par = merge_parity(as_, ai) + merge_parity(bs, bi) + ai.count_ones() * bs.count_ones();
        out.add_term((as_, bs), c * det * (parity_sign(par) * epsilon(n)));
    }
    Ok(out)
}

/// Largest mode count accepted by [`berezin_integrate`].
pub const ORACLE_MODES: usize = 6;

/// `int F dmu_C` by expanding `F e^{<psi, B psibar>}` over the full algebra on
/// modes `0..n` and reading off the top coefficient, with `B = (C^{-1})^T`.
pub fn berezin_integrate(f: &Element, c: &DMatrix<Complex64>) -> Result<Complex64> {
    let n = c.nrows();
    if n != c.ncols() || n == 0 || n > ORACLE_MODES {
        return invalid(format!("the oracle needs a square covariance on 1..={ORACLE_MODES} modes"));
    }
    let sup = f.support();
    let all = (1u128 << n) - 1;
    if sup.0 & !all != 0 || sup.1 & !all != 0 {
        return invalid("element has modes outside the oracle's range");
    }
    let Some(inv) = c.clone().try_inverse() else {
        return invalid("the oracle needs an invertible covariance");
    };
    let mut action = Element::zero();
    for i in 0..n {
        for j in 0..n {
            action = action.add(&Element::monomial(&[i], &[j], inv[(j, i)])?);
        }
    }
    let w = action.exp()?;
    let top = (all, all);
    Ok(f.mul(&w).coefficient(top) / w.coefficient(top))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WickReport {
    pub modes: usize,
    pub samples: usize,
    /// Max `|determinant route - oracle| / max(1, |oracle|)`.
    pub max_difference: f64,
}

/// Random covariances and random elements of every degree up to `modes`,
/// integrated by determinants and by the Berezin oracle.
pub fn wick_oracle_check(modes: usize, samples: usize, seed: u64) -> Result<WickReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let c = DMatrix::from_fn(modes, modes, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let mut f = Element::zero();
        for _ in 0..2 * modes {
            let k = rng.random_range(0..=modes);
            let a = rand::seq::index::sample(&mut rng, modes, k).into_vec();
            let b = rand::seq::index::sample(&mut rng, modes, k).into_vec();
            f = f.add(&Element::monomial(&a, &b, Complex64::new(rng.random_range(-1.0..1.0), 0.0))?);
        }
        let cov = ModeCovariance::square(c.clone())?;
        let det = gaussian_integrate(&f, &cov, None)?.scalar_part();
        let oracle = berezin_integrate(&f, &c)?;
        worst = worst.max((det - oracle).norm() / oracle.norm().max(1.0));
    }
    Ok(WickReport { modes, samples, max_difference: worst })
}

#[derive(Clone, Debug, Serialize)]
pub struct CharacteristicReport {
    pub modes: usize,
    pub expansion: Complex64,
    pub determinant: Complex64,
    pub oracle: Option<Complex64>,
    pub difference: f64,
}

/// `int e^{<psi, J psibar>} dmu_C` by exact expansion against `det(I + J^T C)`.
pub fn characteristic_det_check(j: &DMatrix<Complex64>, c: &DMatrix<Complex64>) -> Result<CharacteristicReport> {
    let n = c.nrows();
    if j.shape() != (n, n) || c.ncols() != n {
        return invalid("J and C must be square of the same size");
    }
    let mut src = Element::zero();
    for a in 0..n {
        for b in 0..n {
            src = src.add(&Element::monomial(&[a], &[b], j[(a, b)])?);
        }
    }
    let e = src.exp()?;
    let expansion = gaussian_integrate(&e, &ModeCovariance::square(c.clone())?, None)?.scalar_part();
    let determinant = (DMatrix::identity(n, n) + j.transpose() * c).determinant();
    let oracle = if n <= ORACLE_MODES && c.clone().try_inverse().is_some() {
        Some(berezin_integrate(&e, c)?)
    } else {
        None
    };
    let mut difference = (expansion - determinant).norm();
    if let Some(o) = oracle {
        difference = difference.max((o - determinant).norm());
    }
    Ok(CharacteristicReport { modes: n, expansion, determinant, oracle, difference })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn random_wick_matches_oracle() {
        let r = wick_oracle_check(ORACLE_MODES, 10, 4).unwrap();
        assert!(r.max_difference < 1e-12, "{r:?}");
    }

    #[test]
    fn epsilons() {
        assert_eq!([epsilon(0), epsilon(1), epsilon(2), epsilon(3), epsilon(4)], [1.0, 1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn two_point_and_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(3, &mut rng);
        let cov = ModeCovariance::square(m.clone()).unwrap();
        let f = Element::monomial(&[1], &[2], c(1.0)).unwrap();
        assert!((gaussian_integrate(&f, &cov, None).unwrap().scalar_part() - m[(1, 2)]).norm() < 1e-15);
        let g = Element::monomial(&[0, 1], &[2], c(1.0)).unwrap();
        assert!(gaussian_integrate(&g, &cov, None).unwrap().is_empty());
    }

    #[test]
    fn four_point_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_matrix(3, &mut rng);
        let cov = ModeCovariance::square(m.clone()).unwrap();
        let f = Element::monomial(&[0, 2], &[1, 2], c(1.0)).unwrap();
        let det = gaussian_integrate(&f, &cov, None).unwrap().scalar_part();
        let expected = -(m[(0, 1)] * m[(2, 2)] - m[(0, 2)] * m[(2, 1)]);
        assert!((det - expected).norm() < 1e-14);
        assert!((berezin_integrate(&f, &m).unwrap() - det).norm() < 1e-12);
        // the alternating order psi psibar psi psibar carries no epsilon sign
        let g = Element::psi(0).unwrap().mul(&Element::psibar(1).unwrap()).mul(&Element::psi(2).unwrap()).mul(&Element::psibar(2).unwrap());
        let dg = gaussian_integrate(&g, &cov, None).unwrap().scalar_part();
        assert!((dg - (m[(0, 1)] * m[(2, 2)] - m[(0, 2)] * m[(2, 1)])).norm() < 1e-14);
    }

    #[test]
    fn spectators_pass_through() {
        let m = DMatrix::from_element(1, 1, c(0.5));
        let cov = ModeCovariance::new(vec![1], vec![1], m).unwrap();
        let f = Element::monomial(&[0, 1], &[0, 1], c(1.0)).unwrap();
        let r = gaussian_integrate(&f, &cov, Some((1, 1))).unwrap();
        // psi0 psi1 psibar0 psibar1 = - psi0 psibar0 psi1 psibar1
        assert_eq!(r, Element::monomial(&[0], &[0], c(-0.5)).unwrap());
        assert!(gaussian_integrate(&f, &cov, None).is_err());
    }

    #[test]
    fn characteristic_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cm = random_matrix(4, &mut rng);
        let zero = DMatrix::zeros(4, 4);
        let r0 = characteristic_det_check(&zero, &cm).unwrap();
        assert!((r0.expansion - c(1.0)).norm() < 1e-15 && (r0.determinant - c(1.0)).norm() < 1e-15);
        let u = random_matrix(4, &mut rng).column(0).into_owned();
        let v = random_matrix(4, &mut rng).column(0).into_owned();
        let j1 = &u * v.transpose();
        let r1 = characteristic_det_check(&j1, &cm).unwrap();
        assert!((r1.determinant - (c(1.0) + (j1.transpose() * &cm).trace())).norm() < 1e-12);
        let j = random_matrix(4, &mut rng);
        assert!(characteristic_det_check(&j, &cm).unwrap().difference < 1e-12);
    }
}
