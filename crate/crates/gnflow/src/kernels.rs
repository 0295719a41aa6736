//! Momentum lattices on the torus `R^2 / L^j Z^2` and position-space
//! evaluation of the covariance kernels
//! `K(x) = L^{-2j} sum_{p != 0} e^{ipx} (-i pslash / p^2) f(p^2)`.
//!
//! Pairing `p` with `-p` turns every kernel into `sum_mu a_mu(x) gamma_mu` with
//! the real odd vector `a_mu(x) = L^{-2j} sum_{p != 0} (p_mu / p^2) f(p^2) sin(p.x)`.
//! For profiles of the form `e^{-l1 p^2} - e^{-l2 p^2}` the same vector has the
//! image-sum form
//! `a(x) = sum_y (x - y) / (2 pi |x - y|^2) (e^{-|x-y|^2/4 l2} - e^{-|x-y|^2/4 l1})`
//! over `y in L^j Z^2`, which stays cheap when `l1` is tiny.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numeric::pairwise_sum;
use crate::spin::{gamma_basis, SpinMatrix};

/// Largest momentum set materialized by [`momentum_lattice`].
pub const MAX_LATTICE_POINTS: usize = 4_000_000;
/// Above this many momenta, difference profiles are evaluated by image sums.
pub const DIRECT_BUDGET: usize = 60_000;

/// Torus of side `L^j` with `n` internal components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TorusSpec {
    pub l: u32,
    pub j: u32,
    pub n: u32,
}

impl TorusSpec {
    pub fn new(l: u32, j: u32, n: u32) -> Result<Self> {
        if l < 2 {
            return invalid(format!("scale base L must be at least 2, got {l}"));
        }
        if n < 2 {
            return invalid(format!("internal component count n must be at least 2, got {n}"));
        }
        if (l as f64).powi(j as i32) > 1e6 {
            return Err(Error::Capacity(format!("torus side {l}^{j} is too large")));
        }
        Ok(Self { l, j, n })
    }

    pub fn lf(&self) -> f64 {
        self.l as f64
    }

    /// Torus side `L^j`.
    pub fn side(&self) -> f64 {
        self.lf().powi(self.j as i32)
    }

    /// Weight `L^{-2j}` of each momentum.
    pub fn weight(&self) -> f64 {
        self.side().powi(-2)
    }

    /// Dual lattice spacing `2 pi L^{-j}`.
    pub fn dual_spacing(&self) -> f64 {
        2.0 * PI / self.side()
    }

    /// Reduce `x` to the fundamental domain `[-side/2, side/2)^2`.
    pub fn reduce(&self, x: [f64; 2]) -> [f64; 2] {
        let s = self.side();
        x.map(|v| v - s * (v / s + 0.5).floor())
    }
}

/// Scalar momentum profile multiplying `-i pslash / p^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Profile {
    Zero,
    /// `e^{-lambda p^2}`
    Gauss { lambda: f64 },
    /// `e^{-l1 p^2} - e^{-l2 p^2}`
    GaussDiff { l1: f64, l2: f64 },
    /// `1 / (z + e^{p^2})`
    Resolvent { z: f64 },
    /// `1 / (z + e^{p^2}) - 1 / (z + e^{l2 p^2})`
    ResolventDiff { z: f64, l2: f64 },
}

impl Profile {
    pub fn value(&self, p2: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Gauss { lambda } => (-lambda * p2).exp(),
            Profile::GaussDiff { l1, l2 } => gauss_diff(l1, l2, p2),
            Profile::Resolvent { z } => 1.0 / (z + p2.exp()),
            Profile::ResolventDiff { z, l2 } => 1.0 / (z + p2.exp()) - 1.0 / (z + (l2 * p2).exp()),
        }
    }

    /// Smallest Gaussian scale in the profile; it controls the momentum cutoff.
    pub fn s_min(&self) -> f64 {
        match *self {
            Profile::Zero => 1.0,
            Profile::Gauss { lambda } => lambda,
            Profile::GaussDiff { l1, .. } => l1,
            Profile::Resolvent { .. } | Profile::ResolventDiff { .. } => 1.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Profile::Zero)
    }
}

/// `e^{-l1 p2} - e^{-l2 p2}` without cancellation for small `p2`.
pub fn gauss_diff(l1: f64, l2: f64, p2: f64) -> f64 {
    -(-l1 * p2).exp() * (-(l2 - l1) * p2).exp_m1()
}

/// The kernel families of the flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum KernelKind {
    G { k: u32 },
    C { k: u32 },
    Gz { k: u32, z: f64 },
    Cz { k: u32, z: f64 },
    W { k: u32 },
    WPrime { k: u32 },
}

impl KernelKind {
    pub fn k(&self) -> u32 {
        match *self {
            KernelKind::G { k }
            | KernelKind::C { k }
            | KernelKind::Gz { k, .. }
            | KernelKind::Cz { k, .. }
            | KernelKind::W { k }
            | KernelKind::WPrime { k } => k,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            KernelKind::G { .. } => "G",
            KernelKind::C { .. } => "C",
            KernelKind::Gz { .. } => "Gz",
            KernelKind::Cz { .. } => "Cz",
            KernelKind::W { .. } => "w",
            KernelKind::WPrime { .. } => "wprime",
        }
    }

    /// Parse a tag as used on the command line.
    pub fn parse(tag: &str, k: u32, z: f64) -> Result<Self> {
        Ok(match tag {
            "G" => KernelKind::G { k },
            "C" => KernelKind::C { k },
            "Gz" => KernelKind::Gz { k, z },
            "Cz" => KernelKind::Cz { k, z },
            "w" | "W" => KernelKind::W { k },
            "wprime" | "w'" | "Wprime" => KernelKind::WPrime { k },
            other => return invalid(format!("unknown kernel kind `{other}`")),
        })
    }

    /// The momentum profile for scale base `l`.
    pub fn profile(&self, l: u32) -> Result<Profile> {
        let l2 = (l as f64).powi(2);
        Ok(match *self {
            KernelKind::G { .. } => Profile::Gauss { lambda: 1.0 },
            KernelKind::C { .. } => Profile::GaussDiff { l1: 1.0, l2 },
            KernelKind::Gz { z, .. } => Profile::Resolvent { z },
            KernelKind::Cz { z, .. } => Profile::ResolventDiff { z, l2 },
            KernelKind::W { k } => {
                if k == 0 {
                    Profile::Zero
                } else {
                    Profile::GaussDiff { l1: l2.powi(-(k as i32)), l2: 1.0 }
                }
            }
            KernelKind::WPrime { k } => match k {
                0 => return invalid("w'_k is undefined at k = 0: the removed slice is all of w_0"),
                1 => Profile::Zero,
                _ => Profile::GaussDiff { l1: l2.powi(-(k as i32 - 1)), l2: 1.0 },
            },
        })
    }
}

/// Profile value of `kind` at momentum `p != 0`.
pub fn kernel_profile(kind: &KernelKind, l: u32, p: [f64; 2]) -> Result<f64> {
    let p2 = p[0] * p[0] + p[1] * p[1];
    if p2 == 0.0 {
        return invalid("the profile is only defined for p != 0");
    }
    Ok(kind.profile(l)?.value(p2))
}

/// Nonzero dual-lattice momenta retained by a Gaussian cutoff.
#[derive(Clone, Debug, Serialize)]
pub struct MomentumSet {
    pub points: Vec<[f64; 2]>,
    /// `L^{-2j}`
    pub weight: f64,
    /// Largest `|m|_inf` scanned.
    pub radius: i64,
    pub tol: f64,
    pub s_min: f64,
}

fn lattice_radius(spec: &TorusSpec, tol: f64, s_min: f64) -> (f64, i64) {
    let pmax = ((-tol.ln()) / s_min).sqrt();
    let m = (pmax / spec.dual_spacing()).floor() as i64;
    (pmax, m)
}

/// Number of momenta [`momentum_lattice`] would return, estimated from the disc area.
pub fn lattice_size_estimate(spec: &TorusSpec, tol: f64, s_min: f64) -> f64 {
    let (pmax, _) = lattice_radius(spec, tol, s_min);
    PI * (pmax / spec.dual_spacing() + 1.0).powi(2)
}

/// All `p = 2 pi L^{-j} m`, `m != 0`, with `e^{-s_min p^2} >= tol`.
pub fn momentum_lattice(spec: &TorusSpec, tol: f64, s_min: f64) -> Result<MomentumSet> {
    if !(tol > 0.0 && tol < 1.0) {
        return invalid(format!("profile tolerance must lie in (0, 1), got {tol}"));
    }
    if s_min <= 0.0 {
        return invalid("Gaussian scale must be positive");
    }
    if lattice_size_estimate(spec, tol, s_min) > MAX_LATTICE_POINTS as f64 {
        return Err(Error::Capacity(format!(
            "momentum lattice for L={}, j={}, tol={tol:e}, s_min={s_min:e} exceeds {MAX_LATTICE_POINTS} points",
            spec.l, spec.j
        )));
    }
    let (pmax, radius) = lattice_radius(spec, tol, s_min);
    let d = spec.dual_spacing();
    let mut points = Vec::new();
    for m0 in -radius..=radius {
        for m1 in -radius..=radius {
            if m0 == 0 && m1 == 0 {
                continue;
            }
            let p = [d * m0 as f64, d * m1 as f64];
            if p[0] * p[0] + p[1] * p[1] <= pmax * pmax {
                points.push(p);
            }
        }
    }
    Ok(MomentumSet { points, weight: spec.weight(), radius, tol, s_min })
}

/// `sum_mu a_mu gamma_mu`.
pub fn vector_to_spin(a: [f64; 2]) -> SpinMatrix {
    let b = gamma_basis();
    b.mu(0) * Complex64::new(a[0], 0.0) + b.mu(1) * Complex64::new(a[1], 0.0)
}

/// Operator norm of a 2x2 complex matrix.
pub fn op_norm(m: &SpinMatrix) -> f64 {
    let fro2: f64 = m.iter().map(|z| z.norm_sqr()).sum();
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm();
    ((fro2 + (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
}

/// `a_mu(x)` by direct momentum summation.
pub fn vector_momentum(profile: &Profile, x: [f64; 2], set: &MomentumSet) -> [f64; 2] {
    if profile.is_zero() {
        return [0.0, 0.0];
    }
    let mut t0 = Vec::with_capacity(set.points.len());
    let mut t1 = Vec::with_capacity(set.points.len());
    for p in &set.points {
        let p2 = p[0] * p[0] + p[1] * p[1];
        let s = profile.value(p2) * (p[0] * x[0] + p[1] * x[1]).sin() / p2;
        t0.push(p[0] * s);
        t1.push(p[1] * s);
    }
    [set.weight * pairwise_sum(&t0), set.weight * pairwise_sum(&t1)]
}

/// Precomputed image offsets for a heat-kernel difference `e^{-l1 p^2} - e^{-l2 p^2}`.
#[derive(Clone, Debug)]
pub struct ImageKernel {
    pub l1: f64,
    pub l2: f64,
    images: Vec<[f64; 2]>,
}

impl ImageKernel {
    /// Images within reach of any point in the fundamental domain at tolerance `tol`.
    pub fn new(l1: f64, l2: f64, side: f64, tol: f64) -> Self {
        let reach = (4.0 * l2.max(l1) * (1.0 / tol).ln()).sqrt();
        let m = ((reach + side) / side).ceil() as i64;
        let mut images = Vec::new();
        for m0 in -m..=m {
            for m1 in -m..=m {
                let y = [side * m0 as f64, side * m1 as f64];
                if (y[0] * y[0] + y[1] * y[1]).sqrt() <= reach + side {
                    images.push(y);
                }
            }
        }
        images.sort_by(|a, b| (a[0] * a[0] + a[1] * a[1]).total_cmp(&(b[0] * b[0] + b[1] * b[1])));
        Self { l1, l2, images }
    }

    /// `a(x)` for `x` in the fundamental domain.
    pub fn vector(&self, x: [f64; 2]) -> [f64; 2] {
        let (q1, q2) = (0.25 / self.l1, 0.25 / self.l2);
        let mut a = [0.0, 0.0];
        // images are sorted by distance, so summing in this order adds the
        // small far-field terms last
        for y in &self.images {
            let d = [x[0] - y[0], x[1] - y[1]];
            let r2 = d[0] * d[0] + d[1] * d[1];
            if r2 == 0.0 {
                continue;
            }
            // e^{-r2 q2} - e^{-r2 q1}, with q2 < q1
            let diff = -(-r2 * q2).exp() * (-r2 * (q1 - q2)).exp_m1();
            let s = diff / (2.0 * PI * r2);
            a[0] += d[0] * s;
            a[1] += d[1] * s;
        }
        a
    }
}

/// `a_mu(x)` through the image sum; only valid for difference profiles.
pub fn vector_images(l1: f64, l2: f64, x: [f64; 2], spec: &TorusSpec, tol: f64) -> [f64; 2] {
    ImageKernel::new(l1, l2, spec.side(), tol).vector(spec.reduce(x))
}

/// Kernel vector `a_mu(x)`, choosing the momentum or image route deterministically.
pub fn kernel_vector(profile: &Profile, x: [f64; 2], spec: &TorusSpec, tol: f64) -> Result<[f64; 2]> {
    match *profile {
        Profile::Zero => Ok([0.0, 0.0]),
        Profile::GaussDiff { l1, l2 } if lattice_size_estimate(spec, tol, l1) > DIRECT_BUDGET as f64 => {
            Ok(vector_images(l1, l2, x, spec, tol))
        }
        _ => {
            let set = momentum_lattice(spec, tol, profile.s_min())?;
            Ok(vector_momentum(profile, spec.reduce(x), &set))
        }
    }
}

/// `K(x) = sum'_p e^{ipx} (-i pslash / p^2) f(p^2)` as a spin matrix.
pub fn eval_kernel(kind: &KernelKind, x: [f64; 2], spec: &TorusSpec, tol: f64) -> Result<SpinMatrix> {
    let profile = kind.profile(spec.l)?;
    Ok(vector_to_spin(kernel_vector(&profile, x, spec, tol)?))
}

/// Both sides of the Poisson identity for the heat kernel.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HeatDual {
    pub fourier_value: f64,
    pub image_value: f64,
}

impl HeatDual {
    pub fn difference(&self) -> f64 {
        (self.fourier_value - self.image_value).abs()
    }
}

/// `L^{-2j} sum_p e^{ipx} e^{-lambda p^2}` (zero mode included) against
/// `(4 pi lambda)^{-1} sum_y e^{-|x-y|^2 / 4 lambda}`.
pub fn heat_kernel_dual(x: [f64; 2], lambda: f64, spec: &TorusSpec, tol: f64) -> Result<HeatDual> {
    if lambda <= 0.0 {
        return invalid(format!("heat-kernel time must be positive, got {lambda}"));
    }
    let x = spec.reduce(x);
    let set = momentum_lattice(spec, tol, lambda)?;
    let terms: Vec<f64> = set
        .points
        .iter()
        .map(|p| (p[0] * x[0] + p[1] * x[1]).cos() * (-lambda * (p[0] * p[0] + p[1] * p[1])).exp())
        .collect();
    let fourier_value = set.weight * (1.0 + pairwise_sum(&terms));

    let side = spec.side();
    let reach = (4.0 * lambda * (1.0 / tol).ln()).sqrt();
    let m = ((reach + side) / side).ceil() as i64;
    let mut img = Vec::new();
    for m0 in -m..=m {
        for m1 in -m..=m {
            let d = [x[0] - side * m0 as f64, x[1] - side * m1 as f64];
            img.push((-(d[0] * d[0] + d[1] * d[1]) / (4.0 * lambda)).exp());
        }
    }
    let image_value = pairwise_sum(&img) / (4.0 * PI * lambda);
    Ok(HeatDual { fourier_value, image_value })
}

/// Uniform sample grid over the fundamental domain at cell midpoints.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SampleGrid {
    pub points_per_side: usize,
}

impl SampleGrid {
    pub fn points(&self, side: f64) -> Vec<[f64; 2]> {
        let n = self.points_per_side;
        let h = side / n as f64;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push([(i as f64 + 0.5) * h - side / 2.0, (j as f64 + 0.5) * h - side / 2.0]);
            }
        }
        out
    }
}

/// Smallest constant making a decay bound hold on the sample grid.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub kind: KernelKind,
    pub l: u32,
    pub j: u32,
    pub k_fit: f64,
    pub bound: String,
    pub samples: usize,
    pub grid: String,
}

/// Fit `K` in `|C_k(x)| <= K e^{-|x|/L}`, `|w_k(x)| <= K |x|^{-1} e^{-|x|}`, or
/// `|C^z_k(x) - C_k(x)| <= K |z| e^{-|x|/L}` (spectral norm of the 2x2 value).
pub fn decay_report(kind: &KernelKind, spec: &TorusSpec, grid: &SampleGrid, tol: f64) -> Result<DecayFit> {
    let lf = spec.lf();
    let pts = grid.points(spec.side());
    let (bound, values): (&str, Vec<f64>) = match *kind {
        KernelKind::C { .. } => {
            let prof = kind.profile(spec.l)?;
            let ratios = pts
                .iter()
                .map(|x| {
                    let a = kernel_vector(&prof, *x, spec, tol)?;
                    let r = x[0].hypot(x[1]);
                    Ok(op_norm(&vector_to_spin(a)) * (r / lf).exp())
                })
                .collect::<Result<Vec<_>>>()?;
            ("|C_k(x)| <= K exp(-|x|/L)", ratios)
        }
        KernelKind::W { .. } => {
            let prof = kind.profile(spec.l)?;
            let ratios = pts
                .iter()
                .map(|x| {
                    let a = kernel_vector(&prof, *x, spec, tol)?;
                    let r = x[0].hypot(x[1]);
                    Ok(op_norm(&vector_to_spin(a)) * r * r.exp())
                })
                .collect::<Result<Vec<_>>>()?;
            ("|w_k(x)| <= K |x|^-1 exp(-|x|)", ratios)
        }
        KernelKind::Cz { k, z } => {
            if z == 0.0 {
                (
                    "|C^z_k(x) - C_k(x)| <= K |z| exp(-|x|/L)",
                    vec![0.0; pts.len()],
                )
            } else {
                let pz = kind.profile(spec.l)?;
                let p0 = KernelKind::C { k }.profile(spec.l)?;
                let set = momentum_lattice(spec, tol, 1.0)?;
                let ratios = pts
                    .iter()
                    .map(|x| {
                        let a = vector_momentum(&pz, *x, &set);
                        let b = vector_momentum(&p0, *x, &set);
                        let r = x[0].hypot(x[1]);
                        op_norm(&vector_to_spin([a[0] - b[0], a[1] - b[1]])) * (r / lf).exp() / z.abs()
                    })
                    .collect();
                ("|C^z_k(x) - C_k(x)| <= K |z| exp(-|x|/L)", ratios)
            }
        }
        _ => return invalid(format!("no decay bound is stated for kernel kind {}", kind.tag())),
    };
    let k_fit = values.iter().copied().fold(0.0, f64::max);
    Ok(DecayFit {
        kind: *kind,
        l: spec.l,
        j: spec.j,
        k_fit,
        bound: bound.into(),
        samples: pts.len(),
        grid: format!("{0}x{0} cell midpoints on [-L^j/2, L^j/2)^2", grid.points_per_side),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(j: u32) -> TorusSpec {
        TorusSpec::new(2, j, 2).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(TorusSpec::new(1, 1, 2).is_err());
        assert!(TorusSpec::new(2, 1, 1).is_err());
        assert!(TorusSpec::new(2, 40, 2).is_err());
    }

    #[test]
    fn lattice_spacing_and_zero_excluded() {
        let s = spec(1);
        let set = momentum_lattice(&s, (-(2.0 * PI).powi(2) * 1.01).exp(), 1.0).unwrap();
        let has = |p: [f64; 2]| set.points.iter().any(|q| (q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12);
        assert!(has([PI, 0.0]));
        assert!(has([-PI, PI]));
        assert!(!has([0.0, 0.0]));
        for p in &set.points {
            assert!(has([-p[0], -p[1]]));
        }
    }

    #[test]
    fn lattice_count_matches_brute_force_scan() {
        let s = spec(3);
        let tol = 1e-14;
        let set = momentum_lattice(&s, tol, 1.0).unwrap();
        let d = s.dual_spacing();
        let mut count = 0;
        for m0 in -200i64..=200 {
            for m1 in -200i64..=200 {
                let p2 = d * d * ((m0 * m0 + m1 * m1) as f64);
                if p2 > 0.0 && (-p2).exp() >= tol {
                    count += 1;
                }
            }
        }
        assert_eq!(set.points.len(), count);
    }

    #[test]
    fn capacity_error_for_huge_lattice() {
        let s = spec(8);
        assert!(matches!(momentum_lattice(&s, 1e-14, 1e-6), Err(Error::Capacity(_))));
    }

    #[test]
    fn c_profile_small_momentum() {
        let kind = KernelKind::C { k: 0 };
        let p2: f64 = 1e-4;
        let f = kernel_profile(&kind, 2, [p2.sqrt(), 0.0]).unwrap();
        assert!((f / p2 - 3.0).abs() < 1e-3);
    }

    #[test]
    fn cz_at_zero_field_is_c() {
        for &p in &[[0.3, 0.1], [1.0, 2.0], [0.01, 0.0]] {
            let a = kernel_profile(&KernelKind::Cz { k: 2, z: 0.0 }, 2, p).unwrap();
            let b = kernel_profile(&KernelKind::C { k: 2 }, 2, p).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn wprime_telescopes_over_slices() {
        // slices s = 1..k-1 of profile e^{-p^2/L^{2s}} - e^{-p^2/L^{2(s-1)}}
        let (l, k) = (2u32, 3u32);
        let lf = l as f64;
        for &p2 in &[0.01, 0.3, 1.0, 4.0, 20.0] {
            let slices: f64 = (1..k)
                .map(|s| (-p2 / lf.powi(2 * s as i32)).exp() - (-p2 / lf.powi(2 * (s as i32 - 1))).exp())
                .sum();
            let closed = KernelKind::WPrime { k }.profile(l).unwrap().value(p2);
            assert!((slices - closed).abs() < 1e-15);
        }
        assert!(KernelKind::WPrime { k: 0 }.profile(2).is_err());
    }

    #[test]
    fn split_identity_c_is_g_minus_scaled_g() {
        for &p2 in &[0.02, 0.5, 3.0] {
            let c = KernelKind::C { k: 1 }.profile(2).unwrap().value(p2);
            assert!((c - ((-p2).exp() - (-4.0 * p2).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn c_vanishes_at_origin_and_w0_is_zero() {
        let s = spec(2);
        let c0 = eval_kernel(&KernelKind::C { k: 0 }, [0.0, 0.0], &s, 1e-14).unwrap();
        assert!(op_norm(&c0) < 1e-15);
        let w0 = eval_kernel(&KernelKind::W { k: 0 }, [0.3, 0.7], &s, 1e-14).unwrap();
        assert!(op_norm(&w0) == 0.0);
    }

    #[test]
    fn routes_agree_for_difference_profiles() {
        let s = spec(2);
        for prof in [Profile::GaussDiff { l1: 1.0, l2: 4.0 }, Profile::GaussDiff { l1: 1.0 / 16.0, l2: 1.0 }] {
            let set = momentum_lattice(&s, 1e-16, prof.s_min()).unwrap();
            let Profile::GaussDiff { l1, l2 } = prof else { unreachable!() };
            for &x in &[[0.3, -0.2], [1.7, 0.4], [-1.9, 1.1], [0.01, 0.02]] {
                let a = vector_momentum(&prof, x, &set);
                let b = vector_images(l1, l2, x, &s, 1e-16);
                assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn heat_dual_agrees_at_origin() {
        let d = heat_kernel_dual([0.0, 0.0], 1.0, &spec(2), 1e-18).unwrap();
        assert!(d.difference() < 1e-12);
    }

    #[test]
    fn heat_dual_large_time_is_zero_mode() {
        let s = spec(1);
        let d = heat_kernel_dual([0.4, 0.1], 200.0, &s, 1e-18).unwrap();
        assert!((d.fourier_value - s.weight()).abs() < 1e-12);
        assert!(heat_kernel_dual([0.0, 0.0], 0.0, &s, 1e-12).is_err());
    }

    #[test]
    fn parseval_for_w1() {
        let s = spec(3);
        let prof = KernelKind::W { k: 1 }.profile(2).unwrap();
        let set = momentum_lattice(&s, 1e-16, prof.s_min()).unwrap();
        let exact: f64 = set
            .points
            .iter()
            .map(|p| {
                let p2 = p[0] * p[0] + p[1] * p[1];
                2.0 * prof.value(p2).powi(2) / p2
            })
            .sum::<f64>()
            * set.weight;
        let Profile::GaussDiff { l1, l2 } = prof else { unreachable!() };
        let ik = ImageKernel::new(l1, l2, s.side(), 1e-16);
        let n = 128;
        let h = s.side() / n as f64;
        let mut quad = 0.0;
        for x in (SampleGrid { points_per_side: n }).points(s.side()) {
            let a = ik.vector(x);
            let w = vector_to_spin(a);
            quad += (w * w.adjoint()).trace().re * h * h;
        }
        assert!((quad - exact).abs() / exact < 1e-6, "{quad} vs {exact}");
    }

    #[test]
    fn decay_rejects_uncovered_kinds() {
        let grid = SampleGrid { points_per_side: 4 };
        assert!(decay_report(&KernelKind::G { k: 0 }, &spec(1), &grid, 1e-12).is_err());
        let fit = decay_report(&KernelKind::Cz { k: 0, z: 0.0 }, &spec(1), &grid, 1e-12).unwrap();
        assert_eq!(fit.k_fit, 0.0);
    }

    #[test]
    fn op_norm_of_gamma_vector_is_length() {
        let m = vector_to_spin([0.3, -0.4]);
        assert!((op_norm(&m) - 0.5).abs() < 1e-15);
    }
}
