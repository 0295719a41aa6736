//! Grid covariances, the factorization `C = C1 * C2`, the constant `h(C)`,
//! and the field-strength determinant.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModeCovariance;
use crate::error::{invalid, Result};
use crate::kernels::{momentum_lattice, TorusSpec};
use crate::spin::{gamma_basis, slash, SpinMatrix};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn cr(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Uniform `m[0] x m[1]` grid on a torus of sides `side`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub m: [usize; 2],
    pub side: [f64; 2],
}

impl Grid {
    pub fn new(m: [usize; 2], side: [f64; 2]) -> Result<Self> {
        if m[0] == 0 || m[1] == 0 || !(side[0] > 0.0 && side[1] > 0.0) {
            return invalid(format!("grid {}x{} on sides {:?} is empty", m[0], m[1], side));
        }
        Ok(Self { m, side })
    }

    pub fn square(m: usize, side: f64) -> Result<Self> {
        Self::new([m, m], [side, side])
    }

    /// Parse `AxB`.
    pub fn parse_dims(s: &str) -> Result<[usize; 2]> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        let parsed: Option<Vec<usize>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
        match parsed.as_deref() {
            Some([a, b]) if *a > 0 && *b > 0 => Ok([*a, *b]),
            _ => invalid(format!("grid must look like `3x1`, got `{s}`")),
        }
    }

    pub fn points(&self) -> usize {
        self.m[0] * self.m[1]
    }

    pub fn spacing(&self, mu: usize) -> f64 {
        self.side[mu] / self.m[mu] as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing(0) * self.spacing(1)
    }

    pub fn volume(&self) -> f64 {
        self.side[0] * self.side[1]
    }

    fn split(&self, p: usize) -> [usize; 2] {
        [p % self.m[0], p / self.m[0]]
    }

    fn join(&self, i: [usize; 2]) -> usize {
        i[0] + self.m[0] * i[1]
    }

    pub fn coords(&self, p: usize) -> [f64; 2] {
        let i = self.split(p);
        [i[0] as f64 * self.spacing(0), i[1] as f64 * self.spacing(1)]
    }

    /// Neighbor of `p` by `step` cells in direction `mu`.
    pub fn shift(&self, p: usize, mu: usize, step: isize) -> usize {
        let mut i = self.split(p);
        let m = self.m[mu] as isize;
        i[mu] = (i[mu] as isize + step).rem_euclid(m) as usize;
        self.join(i)
    }

    /// Point index of `x_p - x_q`.
    pub fn diff(&self, p: usize, q: usize) -> usize {
        let (a, b) = (self.split(p), self.split(q));
        self.join([(a[0] + self.m[0] - b[0]) % self.m[0], (a[1] + self.m[1] - b[1]) % self.m[1]])
    }

    /// One momentum per alias class: `2 pi k / side` with `k in [-floor(m/2), m - floor(m/2))`.
    pub fn momenta(&self) -> Vec<[f64; 2]> {
        let range = |mu: usize| {
            let m = self.m[mu] as i64;
            (-(m / 2)..m - m / 2).map(move |k| 2.0 * PI * k as f64 / self.side[mu])
        };
        range(1).flat_map(|p1| range(0).map(move |p0| [p0, p1])).collect()
    }

    /// `(1/|T|) sum_p f(p) e^{ipx}` at every grid point.
    pub fn synthesize<T>(&self, f: impl Fn([f64; 2]) -> T) -> Vec<T>
    where
        T: Copy + std::ops::Mul<Complex64, Output = T> + std::ops::Add<Output = T>,
    {
        let ps = self.momenta();
        let fp: Vec<T> = ps.iter().map(|&p| f(p)).collect();
        let inv = 1.0 / self.volume();
        (0..self.points())
            .map(|q| {
                let x = self.coords(q);
                let mut acc = fp[0] * cr(0.0);
                for (p, v) in ps.iter().zip(&fp) {
                    acc = acc + *v * Complex64::from_polar(inv, p[0] * x[0] + p[1] * x[1]);
                }
                acc
            })
            .collect()
    }
}

/// A site `(point, spinor, internal)`; its position in a site list is its mode index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub point: usize,
    pub spin: usize,
    pub internal: usize,
}

/// Every site of `grid` with `n` internal components, ordered by `(point, spin, internal)`.
pub fn all_sites(grid: &Grid, n: usize) -> Vec<Site> {
    let mut v = Vec::with_capacity(grid.points() * 2 * n);
    for point in 0..grid.points() {
        for spin in 0..2 {
            for internal in 0..n {
                v.push(Site { point, spin, internal });
            }
        }
    }
    v
}

/// Per-factor samples of `C = C1 * C2`; `C1` is scalar.
#[derive(Clone, Debug)]
pub struct Factorization {
    pub c1: Vec<Complex64>,
    pub c2: Vec<SpinMatrix>,
}

/// Translation-invariant covariance `C(x, y) = K(x - y)` sampled on a grid.
#[derive(Clone, Debug)]
pub struct FiniteCovariance {
    pub grid: Grid,
    pub values: Vec<SpinMatrix>,
    pub factors: Option<Factorization>,
}

/// `(-i pslash / p^2) f`, zero at `p = 0`.
fn dirac_profile(p: [f64; 2], f: f64) -> SpinMatrix {
    let p2 = p[0] * p[0] + p[1] * p[1];
    if p2 == 0.0 {
        SpinMatrix::zeros()
    } else {
        slash(p) * (-I * f / p2)
    }
}

impl FiniteCovariance {
    /// Samples of a continuum kernel at the grid differences.
    pub fn sampled(grid: Grid, kernel: impl Fn([f64; 2]) -> Result<SpinMatrix>) -> Result<Self> {
        let values = (0..grid.points()).map(|q| kernel(grid.coords(q))).collect::<Result<_>>()?;
        Ok(Self { grid, values, factors: None })
    }

    /// Band-limited covariance with factor profiles `c1(p)` (scalar) and `c2(p)`.
    pub fn factored(grid: Grid, c1: impl Fn([f64; 2]) -> f64, c2: impl Fn([f64; 2]) -> SpinMatrix) -> Self {
        let values = grid.synthesize(|p| c2(p) * cr(c1(p)));
        let f1 = grid.synthesize(|p| cr(c1(p)));
        let f2 = grid.synthesize(&c2);
        Self { grid, values, factors: Some(Factorization { c1: f1, c2: f2 }) }
    }

    /// The single-scale covariance with `C1 = e^{-p^2/2}` and
    /// `C2 = (-i pslash/p^2)(e^{-p^2/2} - e^{-(L^2 - 1/2) p^2})`.
    pub fn single_scale(grid: Grid, l: u32) -> Self {
        let l2 = (l as f64).powi(2);
        Self::factored(
            grid,
            |p| (-0.5 * (p[0] * p[0] + p[1] * p[1])).exp(),
            move |p| {
                let p2 = p[0] * p[0] + p[1] * p[1];
                dirac_profile(p, (-0.5 * p2).exp() - (-(l2 - 0.5) * p2).exp())
            },
        )
    }

    pub fn at(&self, p: usize, q: usize) -> SpinMatrix {
        self.values[self.grid.diff(p, q)]
    }

    /// Max entry of `C(d) - sum_z w C1(d - z) C2(z)`.
    pub fn convolution_residual(&self) -> Result<f64> {
        let Some(f) = &self.factors else {
            return invalid("covariance has no factorization");
        };
        let g = &self.grid;
        let w = cr(g.cell_area());
        let mut worst: f64 = 0.0;
        for d in 0..g.points() {
            let mut acc = SpinMatrix::zeros();
            for z in 0..g.points() {
                acc += f.c2[z] * (f.c1[g.diff(d, z)] * w);
            }
            worst = worst.max((acc - self.values[d]).iter().map(|c| c.norm()).fold(0.0, f64::max));
        }
        Ok(worst)
    }

    /// `C(xi, eta) = K(x - y)_{ab} delta_{ij}` between two site lists.
    pub fn mode_covariance(&self, psi: &[Site], bar: &[Site]) -> Result<ModeCovariance> {
        let n = self.grid.points();
        if psi.iter().chain(bar).any(|s| s.point >= n || s.spin > 1) {
            return invalid("site outside the covariance grid");
        }
        let m = DMatrix::from_fn(psi.len(), bar.len(), |r, c| {
            let (s, t) = (psi[r], bar[c]);
            if s.internal != t.internal {
                cr(0.0)
            } else {
                self.at(s.point, t.point)[(s.spin, t.spin)]
            }
        });
        ModeCovariance::new((0..psi.len()).collect(), (0..bar.len()).collect(), m)
    }
}

fn central_difference<T>(grid: &Grid, f: &[T], mu: usize) -> Vec<T>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<Complex64, Output = T>,
{
    let s = cr(0.5 / grid.spacing(mu));
    (0..grid.points()).map(|p| (f[grid.shift(p, mu, 1)] - f[grid.shift(p, mu, -1)]) * s).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct DerivativeNorms {
    pub alpha: [usize; 2],
    pub c1: f64,
    pub c2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HReport {
    pub h: f64,
    pub norms: Vec<DerivativeNorms>,
}

impl HReport {
    /// `(||C1||_2, ||C2||_2)` without derivatives.
    pub fn base_norms(&self) -> (f64, f64) {
        (self.norms[0].c1, self.norms[0].c2)
    }
}

/// Multi-indices with `|alpha| <= 3`, starting with `(0, 0)`.
pub fn derivative_orders() -> Vec<[usize; 2]> {
    (0..=3).flat_map(|t| (0..=t).map(move |a0| [a0, t - a0])).collect()
}

/// `h(C) = sup_{|alpha| <= 3} max(||d^alpha C1||_2, ||d^alpha C2||_2)` with
/// central differences and cell-weighted sums.
pub fn h_of_c(cov: &FiniteCovariance) -> Result<HReport> {
    let Some(f) = &cov.factors else {
        return invalid("h(C) needs the factorization C = C1 * C2");
    };
    let g = &cov.grid;
    let w = g.cell_area();
    let mut norms = Vec::new();
    for alpha in derivative_orders() {
        let (mut d1, mut d2) = (f.c1.clone(), f.c2.clone());
        for mu in 0..2 {
            for _ in 0..alpha[mu] {
                d1 = central_difference(g, &d1, mu);
                d2 = central_difference(g, &d2, mu);
            }
        }
        let n1 = (w * d1.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt();
        let n2 = (w * d2.iter().map(|m| m.norm_squared()).sum::<f64>()).sqrt();
        norms.push(DerivativeNorms { alpha, c1: n1, c2: n2 });
    }
    let h = norms.iter().map(|d| d.c1.max(d.c2)).fold(0.0, f64::max);
    Ok(HReport { h, norms })
}

#[derive(Clone, Debug, Serialize)]
pub struct GramReport {
    pub draws: usize,
    pub size: usize,
    /// Max of `|det| / (||C1||^n ||C2||^n)`; the bound holds when this is at most 1.
    pub max_ratio: f64,
}

impl GramReport {
    pub fn passed(&self) -> bool {
        self.max_ratio <= 1.0 + 1e-12
    }
}

/// `|det C(x_i - y_j)_{a_i b_j}| <= ||C1||^n ||C2||^n` on random `n x n` site draws.
pub fn gram_check(cov: &FiniteCovariance, size: usize, draws: usize, seed: u64) -> Result<GramReport> {
    let rep = h_of_c(cov)?;
    let (n1, n2) = rep.base_norms();
    let bound = (n1 * n2).powi(size as i32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = cov.grid.points();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<Site> {
        (0..size).map(|_| Site { point: rng.random_range(0..np), spin: rng.random_range(0..2), internal: 0 }).collect()
    };
    let mut max_ratio: f64 = 0.0;
    for _ in 0..draws {
        let (xs, ys) = (draw(&mut rng), draw(&mut rng));
        let d = cov.mode_covariance(&xs, &ys)?.matrix.determinant();
        max_ratio = max_ratio.max(d.norm() / bound);
    }
    Ok(GramReport { draws, size, max_ratio })
}

/// Continuum `h` of a factored kernel on a square torus of side `side`:
/// `||d^alpha f||_2^2 = sum'_p |p^alpha|^2 |f(p)|^2` for both factors, where
/// `c2_hs` is the Hilbert-Schmidt norm of the second factor profile.
pub fn spectral_h(side: f64, c1: impl Fn(f64) -> f64, c2_hs: impl Fn(f64) -> f64, pmax: f64) -> HReport {
    let d = 2.0 * PI / side;
    let r = (pmax / d).ceil() as i64;
    let orders = derivative_orders();
    let mut s1 = vec![0.0; orders.len()];
    let mut s2 = vec![0.0; orders.len()];
    for k0 in -r..=r {
        for k1 in -r..=r {
            let p = [d * k0 as f64, d * k1 as f64];
            let p2 = p[0] * p[0] + p[1] * p[1];
            let (a, b) = (c1(p2).powi(2), c2_hs(p2).powi(2));
            for (i, al) in orders.iter().enumerate() {
                let m = p[0].powi(2 * al[0] as i32) * p[1].powi(2 * al[1] as i32);
                s1[i] += m * a;
                s2[i] += m * b;
            }
        }
    }
    let wgt = side.powi(-2);
    let norms: Vec<DerivativeNorms> = orders
        .iter()
        .enumerate()
        .map(|(i, &alpha)| DerivativeNorms { alpha, c1: (wgt * s1[i]).sqrt(), c2: (wgt * s2[i]).sqrt() })
        .collect();
    let h = norms.iter().map(|d| d.c1.max(d.c2)).fold(0.0, f64::max);
    HReport { h, norms }
}

/// `h(G_f)` on the unit torus with `C1 = e^{-p^2/2}` and `C2 = (-i pslash/p^2) e^{-p^2/2}`.
pub fn h_final() -> HReport {
    spectral_h(
        1.0,
        |p2| (-0.5 * p2).exp(),
        |p2| if p2 == 0.0 { 0.0 } else { (2.0 / p2).sqrt() * (-0.5 * p2).exp() },
        14.0,
    )
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FieldStrengthDet {
    pub z: f64,
    pub log_det: f64,
    pub det: f64,
    /// `log det / |T|`.
    pub eps_prime: f64,
    pub volume: f64,
    pub momenta: usize,
}

/// `det(I + z dslash G)` from the eigenvalues `z e^{-p^2}` (multiplicity `2n`) over
/// the nonzero dual momenta of `spec`.
pub fn field_strength_det(z: f64, spec: &TorusSpec, tol: f64) -> Result<FieldStrengthDet> {
    if !z.is_finite() {
        return invalid("z must be finite");
    }
    let set = momentum_lattice(spec, tol, 1.0)?;
    let mut s = 0.0;
    for p in &set.points {
        let x = z * (-(p[0] * p[0] + p[1] * p[1])).exp();
        if 1.0 + x <= 0.0 {
            return invalid(format!("1 + z e^(-p^2) = {} <= 0 at p = {p:?}", 1.0 + x));
        }
        s += x.ln_1p();
    }
    let log_det = 2.0 * spec.n as f64 * s;
    let volume = spec.side().powi(2);
    Ok(FieldStrengthDet { z, log_det, det: log_det.exp(), eps_prime: log_det / volume, volume, momenta: set.points.len() })
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldStrengthBound {
    pub samples: Vec<FieldStrengthDet>,
    /// `max |eps'| / |z|`.
    pub constant: f64,
    /// `2n / (1 - |z|_max) |T|^{-1} sum'_p e^{-p^2}`, which bounds `constant`.
    pub ceiling: f64,
}

impl FieldStrengthBound {
    pub fn passed(&self) -> bool {
        self.constant <= self.ceiling
    }
}

pub const FIELD_STRENGTH_ZS: [f64; 4] = [0.01, -0.01, 0.05, -0.05];

pub fn field_strength_bound(spec: &TorusSpec, zs: &[f64], tol: f64) -> Result<FieldStrengthBound> {
    let samples: Vec<FieldStrengthDet> = zs.iter().map(|&z| field_strength_det(z, spec, tol)).collect::<Result<_>>()?;
    let constant = samples.iter().filter(|s| s.z != 0.0).map(|s| s.eps_prime.abs() / s.z.abs()).fold(0.0, f64::max);
    let zmax = zs.iter().map(|z| z.abs()).fold(0.0, f64::max);
    let set = momentum_lattice(spec, tol, 1.0)?;
    let sum: f64 = set.points.iter().map(|p| (-(p[0] * p[0] + p[1] * p[1])).exp()).sum();
    let ceiling = 2.0 * spec.n as f64 * sum / (spec.side().powi(2) * (1.0 - zmax));
    Ok(FieldStrengthBound { samples, constant, ceiling })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DenseDetCheck {
    pub z: f64,
    pub dense_log_det: f64,
    pub formula_log_det: f64,
    pub difference: f64,
}

/// Dense `det(I + z dslash G)` on a grid, with `dslash` and `G` assembled
/// separately as spectral matrices, against the eigenvalue formula with `n = 1`.
pub fn field_strength_dense_check(z: f64, grid: &Grid) -> Result<DenseDetCheck> {
    let np = grid.points();
    if np > 400 {
        return invalid(format!("dense check limited to 400 grid points, got {np}"));
    }
    let ps = grid.momenta();
    let phase = |p: &[f64; 2], x: usize, y: usize| {
        let (a, b) = (grid.coords(x), grid.coords(y));
        Complex64::from_polar(1.0 / np as f64, p[0] * (a[0] - b[0]) + p[1] * (a[1] - b[1]))
    };
    let gb = gamma_basis();
    let dim = 2 * np;
    let mut dslash = DMatrix::<Complex64>::zeros(dim, dim);
    let mut g = DMatrix::<Complex64>::zeros(dim, dim);
    for x in 0..np {
        for y in 0..np {
            let mut d = [cr(0.0); 2];
            let mut gm = SpinMatrix::zeros();
            for p in &ps {
                let e = phase(p, x, y);
                d[0] += I * p[0] * e;
                d[1] += I * p[1] * e;
                gm += dirac_profile(*p, (-(p[0] * p[0] + p[1] * p[1])).exp()) * e;
            }
            for a in 0..2 {
                for b in 0..2 {
                    dslash[(2 * x + a, 2 * y + b)] = gb.mu(0)[(a, b)] * d[0] + gb.mu(1)[(a, b)] * d[1];
                    g[(2 * x + a, 2 * y + b)] = gm[(a, b)];
                }
            }
        }
    }
    let m = DMatrix::identity(dim, dim) + (dslash * g) * cr(z);
    let dense_log_det = m.determinant().ln().re;
    let mut formula = 0.0;
    for p in &ps {
        let p2 = p[0] * p[0] + p[1] * p[1];
        if p2 > 0.0 {
            let x = z * (-p2).exp();
            if 1.0 + x <= 0.0 {
                return invalid("log argument is not positive");
            }
            formula += 2.0 * x.ln_1p();
        }
    }
    Ok(DenseDetCheck { z, dense_log_det, formula_log_det: formula, difference: (dense_log_det - formula).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{gaussian_integrate, Element};

    #[test]
    fn grid_geometry() {
        let g = Grid::new([3, 2], [1.5, 1.0]).unwrap();
        assert_eq!(g.points(), 6);
        assert!((g.cell_area() - 0.25).abs() < 1e-15);
        assert_eq!(g.shift(0, 0, -1), 2);
        assert_eq!(g.diff(0, 4), g.join([2, 1]));
        assert_eq!(g.momenta().len(), 6);
        assert_eq!(Grid::parse_dims("3x1").unwrap(), [3, 1]);
        assert!(Grid::parse_dims("3").is_err());
    }

    #[test]
    fn convolution_identity() {
        let c = FiniteCovariance::single_scale(Grid::square(8, 4.0).unwrap(), 2);
        assert!(c.convolution_residual().unwrap() < 1e-12);
    }

    #[test]
    fn gram_bound_three_by_three() {
        let c = FiniteCovariance::single_scale(Grid::square(8, 4.0).unwrap(), 2);
        let r = gram_check(&c, 3, 100, 7).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn h_requires_factors() {
        let g = Grid::square(2, 1.0).unwrap();
        let c = FiniteCovariance::sampled(g, |_| Ok(SpinMatrix::identity())).unwrap();
        assert!(h_of_c(&c).is_err());
    }

    #[test]
    fn concert_bound_on_random_elements() {
        let c = FiniteCovariance::single_scale(Grid::square(4, 2.0).unwrap(), 2);
        let h = h_of_c(&c).unwrap().h;
        let sites: Vec<Site> = all_sites(&c.grid, 1).into_iter().take(6).collect();
        let cov = c.mode_covariance(&sites, &sites).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut f = Element::zero();
            for _ in 0..6 {
                let n = rng.random_range(0..4);
                let a: Vec<usize> = rand::seq::index::sample(&mut rng, 6, n).into_vec();
                let b: Vec<usize> = rand::seq::index::sample(&mut rng, 6, n).into_vec();
                let v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                f = f.add(&Element::monomial(&a, &b, v).unwrap());
            }
            let i = gaussian_integrate(&f, &cov, None).unwrap().scalar_part();
            assert!(i.norm() <= f.surrogate_norm(h) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn field_strength_trivial_and_dense() {
        let spec = TorusSpec::new(2, 2, 2).unwrap();
        let d = field_strength_det(0.0, &spec, 1e-18).unwrap();
        assert_eq!((d.det, d.eps_prime), (1.0, 0.0));
        assert!(field_strength_det(-2e30, &spec, 1e-18).is_err());
        let b = field_strength_bound(&spec, &FIELD_STRENGTH_ZS, 1e-18).unwrap();
        assert!(b.passed(), "{b:?}");
        for z in [0.05, -0.05] {
            let r = field_strength_dense_check(z, &Grid::square(6, 3.0).unwrap()).unwrap();
            assert!(r.difference < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn spectral_h_of_final_kernel() {
        let r = h_final();
        assert!(r.h >= 1.0 && r.h < 10.0, "{}", r.h);
    }
}
