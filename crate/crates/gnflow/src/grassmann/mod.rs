//! Finite-mode Grassmann algebra.
//!
//! An element is a sum of ordered monomials `psi_{i_1} .. psi_{i_n} psibar_{j_1} .. psibar_{j_m}`
//! with `i_1 < .. < i_n` and `j_1 < .. < j_m`, keyed by the pair of index masks.
//! Antisymmetric kernels are recovered from the coefficients by [`Element::kernel_entry`].

mod covariance;
mod gaussian;
mod partition;

pub use covariance::*;
pub use gaussian::*;
pub use partition::*;

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// Number of modes of each species a key can hold.
pub const MODE_CAPACITY: usize = 128;
/// Default cap on the total degree produced by [`multiply`].
pub const DEFAULT_DEGREE_CAP: usize = 8;

/// `(psi mask, psibar mask)`.
pub type Key = (u128, u128);

fn bit(i: usize) -> u128 {
    1u128 << i
}

/// Sign exponent of reordering the concatenation `a ++ b` of two sorted index
/// sets into sorted order: the number of pairs `x in a`, `y in b` with `x > y`.
pub fn merge_parity(a: u128, b: u128) -> u32 {
    let mut n = 0;
    let mut rest = b;
    while rest != 0 {
        let y = rest.trailing_zeros();
        n += ((a >> y) >> 1).count_ones();
        rest &= rest - 1;
    }
    n
}

fn parity_sign(n: u32) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Mask and permutation sign of an index list, `None` when an index repeats.
pub fn sort_sign(idx: &[usize]) -> Result<Option<(u128, f64)>> {
    let mut mask = 0u128;
    let mut inversions = 0u32;
    for &i in idx {
        if i >= MODE_CAPACITY {
            return Err(Error::Capacity(format!("mode index {i} exceeds the {MODE_CAPACITY}-mode key")));
        }
        if mask & bit(i) != 0 {
            return Ok(None);
        }
        inversions += ((mask >> i) >> 1).count_ones();
        mask |= bit(i);
    }
    Ok(Some((mask, parity_sign(inversions))))
}

fn degree(k: Key) -> usize {
    (k.0.count_ones() + k.1.count_ones()) as usize
}

fn mask_indices(mut m: u128) -> Vec<usize> {
    let mut v = Vec::with_capacity(m.count_ones() as usize);
    while m != 0 {
        v.push(m.trailing_zeros() as usize);
        m &= m - 1;
    }
    v
}

/// Product sign and key of two ordered monomials, `None` if they share a mode.
pub fn monomial_product(a: Key, b: Key) -> Option<(Key, f64)> {
    if a.0 & b.0 != 0 || a.1 & b.1 != 0 {
        return None;
    }
    let par = a.1.count_ones() * b.0.count_ones() + merge_parity(a.0, b.0) + merge_parity(a.1, b.1);
    Some(((a.0 | b.0, a.1 | b.1), parity_sign(par)))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Element {
    terms: BTreeMap<Key, Complex64>,
}

impl Element {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn scalar(c: Complex64) -> Self {
        let mut e = Self::zero();
        e.add_term((0, 0), c);
        e
    }

    pub fn one() -> Self {
        Self::scalar(Complex64::new(1.0, 0.0))
    }

    /// `c psi_{psi[0]} .. psibar_{bar[0]} ..` in the given order.
    pub fn monomial(psi: &[usize], bar: &[usize], c: Complex64) -> Result<Self> {
        let mut e = Self::zero();
        if let (Some((m0, s0)), Some((m1, s1))) = (sort_sign(psi)?, sort_sign(bar)?) {
            e.add_term((m0, m1), c * s0 * s1);
        }
        Ok(e)
    }

    pub fn psi(i: usize) -> Result<Self> {
        Self::monomial(&[i], &[], Complex64::new(1.0, 0.0))
    }

    pub fn psibar(j: usize) -> Result<Self> {
        Self::monomial(&[], &[j], Complex64::new(1.0, 0.0))
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Key, Complex64)>) -> Self {
        let mut e = Self::zero();
        for (k, c) in terms {
            e.add_term(k, c);
        }
        e
    }

    pub fn add_term(&mut self, k: Key, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        let slot = self.terms.entry(k).or_default();
        *slot += c;
        if *slot == Complex64::new(0.0, 0.0) {
            self.terms.remove(&k);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Key, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, k: Key) -> Complex64 {
        self.terms.get(&k).copied().unwrap_or_default()
    }

    pub fn scalar_part(&self) -> Complex64 {
        self.coefficient((0, 0))
    }

    pub fn max_degree(&self) -> usize {
        self.terms.keys().map(|&k| degree(k)).max().unwrap_or(0)
    }

    /// Union of the modes appearing in any term.
    pub fn support(&self) -> Key {
        self.terms.keys().fold((0, 0), |acc, k| (acc.0 | k.0, acc.1 | k.1))
    }

    pub fn is_even(&self) -> bool {
        self.terms.keys().all(|&k| degree(k).is_multiple_of(2))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut e = self.clone();
        for (&k, &c) in &other.terms {
            e.add_term(k, c);
        }
        e
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_terms(self.terms.iter().map(|(&k, &v)| (k, v * c)))
    }

    /// Exact product, limited only by the mode capacity.
    pub fn mul(&self, other: &Self) -> Self {
        let mut e = Self::zero();
        for (&ka, &ca) in &self.terms {
            for (&kb, &cb) in &other.terms {
                if let Some((k, s)) = monomial_product(ka, kb) {
                    e.add_term(k, ca * cb * s);
                }
            }
        }
        e
    }

    /// `e^F` for even `F`; the nilpotent part terminates the series.
    pub fn exp(&self) -> Result<Self> {
        if !self.is_even() {
            return invalid("the exponential is only defined here for even elements");
        }
        let c0 = self.scalar_part();
        let nil = self.sub(&Self::scalar(c0));
        let mut sum = Self::one();
        let mut power = Self::one();
        let mut k = 1.0;
        loop {
            power = power.mul(&nil).scale(Complex64::new(1.0 / k, 0.0));
            if power.is_empty() {
                break;
            }
            sum = sum.add(&power);
            k += 1.0;
        }
        Ok(sum.scale(c0.exp()))
    }

    /// `sum_{n,m} h^{n+m} / (n! m!) ||F_{nm}||_1`; with kernels normalized by the
    /// cell measure this equals `sum_{I,J} h^{|I|+|J|} |c(I,J)|`.
    pub fn surrogate_norm(&self, h: f64) -> f64 {
        self.terms.iter().map(|(&k, c)| h.powi(degree(k) as i32) * c.norm()).sum()
    }

    /// Two-species norm: modes `>= split` are weighted by `h2`, the rest by `h1`.
    pub fn surrogate_norm_split(&self, split: usize, h1: f64, h2: f64) -> f64 {
        let low = if split >= MODE_CAPACITY { u128::MAX } else { bit(split) - 1 };
        self.terms
            .iter()
            .map(|(&k, c)| {
                let n1 = (k.0 & low).count_ones() + (k.1 & low).count_ones();
                let n2 = (k.0 & !low).count_ones() + (k.1 & !low).count_ones();
                h1.powi(n1 as i32) * h2.powi(n2 as i32) * c.norm()
            })
            .sum()
    }

    /// Kernel value `F_{nm}(psi tuple; psibar tuple)` for the normalization
    /// `F = sum 1/(n! m!) sum_tuples w^{n+m} F_{nm} psi .. psibar ..` with cell measure `w`.
    pub fn kernel_entry(&self, psi: &[usize], bar: &[usize], cell: f64) -> Result<Complex64> {
        match (sort_sign(psi)?, sort_sign(bar)?) {
            (Some((m0, s0)), Some((m1, s1))) => {
                let w = cell.powi((psi.len() + bar.len()) as i32);
                Ok(self.coefficient((m0, m1)) * (s0 * s1 / w))
            }
            _ => Ok(Complex64::new(0.0, 0.0)),
        }
    }

    /// `F(psi + eta)` with `eta_i` stored as mode `i + split` of the same species.
    pub fn shift_split(&self, split: usize) -> Result<Self> {
        let sup = self.support();
        let top = 128 - sup.0.max(sup.1).leading_zeros() as usize;
        if top > split || split + top > MODE_CAPACITY {
            return Err(Error::Capacity(format!(
                "shift by {split} with modes up to {top} does not fit the {MODE_CAPACITY}-mode key"
            )));
        }
        let mut e = Self::zero();
        for (&(a, b), &c) in &self.terms {
            for ta in subsets(a) {
                let sa = merge_parity(a & !ta, ta);
                for tb in subsets(b) {
                    let sb = merge_parity(b & !tb, tb);
                    let key = ((a & !ta) | (ta << split), (b & !tb) | (tb << split));
                    e.add_term(key, c * parity_sign(sa + sb));
                }
            }
        }
        Ok(e)
    }

    /// Terms whose modes all lie in `keep`.
    pub fn restrict(&self, keep: Key) -> Self {
        Self::from_terms(
            self.terms.iter().filter(|(&k, _)| k.0 & !keep.0 == 0 && k.1 & !keep.1 == 0).map(|(&k, &c)| (k, c)),
        )
    }

    /// Max coefficient modulus of `self - other`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.sub(other).terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn indices(k: Key) -> (Vec<usize>, Vec<usize>) {
        (mask_indices(k.0), mask_indices(k.1))
    }
}

/// All submasks of `m`, including `0` and `m`.
fn subsets(m: u128) -> Vec<u128> {
    let mut out = Vec::with_capacity(1 << m.count_ones());
    let mut s = m;
    loop {
        out.push(s);
        if s == 0 {
            break;
        }
        s = (s - 1) & m;
    }
    out
}

/// Product with a cap on the total degree of the result.
pub fn multiply(f: &Element, g: &Element, cap: usize) -> Result<Element> {
    let h = f.mul(g);
    let d = h.max_degree();
    if d > cap {
        return Err(Error::Capacity(format!("product has degree {d}, above the cap {cap}")));
    }
    Ok(h)
}

/// Bilinear `sum_{ab} psibar_{bar[a]} m_{ab} psi_{psi[b]}`.
pub fn bilinear(bar: &[usize], m: &[[Complex64; 2]; 2], psi: &[usize]) -> Result<Element> {
    let mut e = Element::zero();
    for (a, &ja) in bar.iter().enumerate() {
        for (b, &ib) in psi.iter().enumerate() {
            // psibar psi = - psi psibar
            e = e.add(&Element::monomial(&[ib], &[ja], -m[a][b])?);
        }
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn nilpotent_and_anticommuting() {
        let p0 = Element::psi(0).unwrap();
        let p1 = Element::psi(1).unwrap();
        let b0 = Element::psibar(0).unwrap();
        assert!(p0.mul(&p0).is_empty());
        assert_eq!(p0.mul(&p1), p1.mul(&p0).scale(c(-1.0)));
        assert_eq!(p0.mul(&b0), b0.mul(&p0).scale(c(-1.0)));
        assert_eq!(Element::scalar(c(3.0)).mul(&p1), p1.scale(c(3.0)));
    }

    #[test]
    fn associative_on_mixed_monomials() {
        let a = Element::monomial(&[2], &[0], c(1.5)).unwrap().add(&Element::psi(1).unwrap());
        let b = Element::monomial(&[0], &[1, 2], c(-0.5)).unwrap().add(&Element::psibar(3).unwrap());
        let d = Element::monomial(&[3], &[], c(2.0)).unwrap().add(&Element::one());
        assert!(a.mul(&b).mul(&d).distance(&a.mul(&b.mul(&d))) < 1e-15);
    }

    #[test]
    fn monomial_order_sign() {
        let e = Element::monomial(&[1, 0], &[], c(1.0)).unwrap();
        assert_eq!(e.coefficient((0b11, 0)), c(-1.0));
        assert!(Element::monomial(&[1, 1], &[], c(1.0)).unwrap().is_empty());
    }

    #[test]
    fn kernel_antisymmetry() {
        let e = Element::monomial(&[0, 3], &[1, 2], c(0.7)).unwrap();
        let w = 0.25;
        let f = e.kernel_entry(&[0, 3], &[1, 2], w).unwrap();
        assert_eq!(e.kernel_entry(&[3, 0], &[1, 2], w).unwrap(), -f);
        assert_eq!(e.kernel_entry(&[3, 0], &[2, 1], w).unwrap(), f);
        assert_eq!(e.kernel_entry(&[0, 0], &[1, 2], w).unwrap(), c(0.0));
    }

    #[test]
    fn norm_of_local_and_point_entries() {
        let (h, a2) = (1.7, 0.25);
        // a local (1,1) entry integrated over one cell: a^2 psi(x) psibar(x)
        let local = Element::monomial(&[0], &[0], c(a2)).unwrap();
        assert!((local.surrogate_norm(h) - h * h * a2).abs() < 1e-15);
        assert!((local.scale(c(-3.0)).surrogate_norm(h) - 3.0 * local.surrogate_norm(h)).abs() < 1e-14);
    }

    #[test]
    fn exp_of_pair() {
        let n = Element::monomial(&[0], &[0], c(2.0)).unwrap();
        let e = n.exp().unwrap();
        assert_eq!(e, Element::one().add(&n));
        assert!(Element::psi(0).unwrap().exp().is_err());
    }

    #[test]
    fn shift_split_degree_one_and_norm() {
        let f = Element::psi(1).unwrap().add(&Element::psibar(0).unwrap().scale(c(2.0)));
        let g = f.shift_split(4).unwrap();
        let expected = f.add(&Element::psi(5).unwrap()).add(&Element::psibar(4).unwrap().scale(c(2.0)));
        assert_eq!(g, expected);
        let m = Element::monomial(&[0, 2], &[1, 3], c(-0.3)).unwrap();
        let mp = m.shift_split(4).unwrap();
        let (h, h2) = (0.6, 1.1);
        assert!((mp.surrogate_norm_split(4, h, h2) - m.surrogate_norm(h + h2)).abs() < 1e-14);
        assert_eq!(mp.restrict((0b1111, 0b1111)), m);
    }

    #[test]
    fn capped_product() {
        let a = Element::monomial(&[0, 1], &[0, 1], c(1.0)).unwrap();
        let b = Element::monomial(&[2, 3], &[2, 3], c(1.0)).unwrap();
        assert!(multiply(&a, &b, 8).is_ok());
        assert!(matches!(multiply(&a, &b, 6), Err(Error::Capacity(_))));
    }
}
