//! Per-step flow coefficients `beta_k, beta'_k, theta_k, theta^p_k, theta^v_k, eps^Q_k`.
//!
//! With `a` the vector part of a kernel (`w = sum_mu a_mu gamma_mu`):
//!
//! * `beta(w)     = 4 (n - 1) int |a|^2`
//! * `theta(w)    = (4 - 8n) I3(w)`, `I3(w) = int |a(r)|^2 (a(r) . r) d^2 r`
//! * `theta^p(w') = 8 I3(w')`, `theta^v(w') = -16 I3(w')`
//! * `eps(w)      = (4 n^2 - 2 n) int |a|^4`
//!
//! and every coefficient is the difference `X(w + C_k) - X(w)` (primed
//! kernels for `beta'`, `theta^p`, `theta^v`). `beta` is summed exactly in
//! momentum space; the rest use position-space quadrature.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{gauss_diff, momentum_lattice, ImageKernel, TorusSpec};
use crate::numeric::{gauss_legendre, pairwise_sum};

/// Physical parameters shared by every step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffSpec {
    pub l: u32,
    pub n: u32,
    /// Extra volume exponent `M`.
    pub m: u32,
    /// Cap on the torus exponent used for coefficient integrals.
    pub j_cap: u32,
}

impl Default for CoeffSpec {
    fn default() -> Self {
        Self { l: 2, n: 2, m: 0, j_cap: 4 }
    }
}

impl CoeffSpec {
    /// Torus exponent `min(N + M - k, j_cap)` for step `k` of an `N`-step flow.
    pub fn torus_exponent(&self, k: u32, big_n: u32) -> u32 {
        (big_n + self.m).saturating_sub(k).min(self.j_cap)
    }

    fn torus(&self, j: u32) -> Result<TorusSpec> {
        TorusSpec::new(self.l, j, self.n.max(2))
    }
}

/// Position-space quadrature controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Uniform cells per unit length (at least 8, even).
    pub cells_per_unit: usize,
    /// Gauss-Legendre points per cell axis (1 is the midpoint rule).
    pub order: usize,
    /// Truncation tolerance for image and momentum sums.
    pub tol: f64,
    /// Refinement depth cap around the coincident point.
    pub max_depth: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { cells_per_unit: 8, order: 2, tol: 1e-15, max_depth: 64 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cells_per_unit < 8 || !self.cells_per_unit.is_multiple_of(2) {
            return invalid(format!("quadrature needs an even count of at least 8 cells per unit, got {}", self.cells_per_unit));
        }
        if self.order == 0 || self.order > 4 {
            return invalid("quadrature order must be 1 to 4");
        }
        Ok(())
    }

    /// Same rule at half the cell size.
    pub fn refined(&self) -> Self {
        Self { cells_per_unit: 2 * self.cells_per_unit, ..*self }
    }
}

fn l2k(l: u32, k: i32) -> f64 {
    (l as f64).powi(2 * k)
}

/// Heat-kernel pair `(l1, l2)` of `w_k` (`None` when `w_k = 0`).
fn w_pair(l: u32, k: u32) -> Option<(f64, f64)> {
    (k >= 1).then(|| (l2k(l, -(k as i32)), 1.0))
}

/// Heat-kernel pair of `w'_k` (`None` when `w'_k = 0`, i.e. `k <= 1`).
fn wprime_pair(l: u32, k: u32) -> Option<(f64, f64)> {
    (k >= 2).then(|| (l2k(l, -(k as i32 - 1)), 1.0))
}

/// `4 c sum'_p (1/p^2) (F_full^2 - F_w^2)` with `F_full - F_w = e^{-p^2} - e^{-L^2 p^2}`.
fn beta_momentum(spec: &TorusSpec, w_l1: Option<f64>, prefactor: f64) -> Result<f64> {
    let l2 = spec.lf().powi(2);
    let set = momentum_lattice(spec, 1e-18, 1.0)?;
    let terms: Vec<f64> = set
        .points
        .iter()
        .map(|p| {
            let p2 = p[0] * p[0] + p[1] * p[1];
            let c = gauss_diff(1.0, l2, p2);
            let w = w_l1.map_or(0.0, |l1| gauss_diff(l1, 1.0, p2));
            c * (c + 2.0 * w) / p2
        })
        .collect();
    Ok(prefactor * set.weight * pairwise_sum(&terms))
}

/// `beta_k = 4 (n - 1) sum'_p (1/p^2) [F_full^2 - F_w^2]` on the torus of exponent `j`.
pub fn beta_k(k: u32, spec: &TorusSpec) -> Result<f64> {
    beta_momentum(spec, w_pair(spec.l, k).map(|p| p.0), 4.0 * (spec.n as f64 - 1.0))
}

/// `beta_k` with an explicit `n` (allowing the degenerate `n = 1`).
pub fn beta_k_with_n(k: u32, spec: &TorusSpec, n: u32) -> Result<f64> {
    beta_momentum(spec, w_pair(spec.l, k).map(|p| p.0), 4.0 * (n as f64 - 1.0))
}

/// `beta'_k = 4 sum'_p (1/p^2) [F'_full^2 - F'_w^2]`; at `k = 0` and `k = 1`, `w'_k = 0`.
pub fn beta_prime_k(k: u32, spec: &TorusSpec) -> Result<f64> {
    beta_momentum(spec, wprime_pair(spec.l, k).map(|p| p.0), 4.0)
}

/// Quadrature results for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaFamily {
    pub theta: f64,
    pub theta_p: f64,
    pub theta_v: f64,
    pub eps_q: f64,
    /// `beta_k` recomputed by position quadrature (Parseval cross-check).
    pub beta_quad: f64,
}

impl ThetaFamily {
    fn max_rel_change(&self, other: &Self) -> f64 {
        let pairs = [(self.theta, other.theta), (self.theta_p, other.theta_p), (self.eps_q, other.eps_q)];
        pairs
            .iter()
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-12))
            .fold(0.0, f64::max)
    }
}

struct Fields {
    c: ImageKernel,
    w: Option<ImageKernel>,
    wp: Option<ImageKernel>,
    lambda_min: f64,
}

impl Fields {
    fn new(l: u32, k: u32, side: f64, tol: f64) -> Self {
        let l2 = (l as f64).powi(2);
        let c = ImageKernel::new(1.0, l2, side, tol);
        let w = w_pair(l, k).map(|(a, b)| ImageKernel::new(a, b, side, tol));
        let wp = wprime_pair(l, k).map(|(a, b)| ImageKernel::new(a, b, side, tol));
        let lambda_min = w.as_ref().map_or(1.0, |w| w.l1);
        Self { c, w, wp, lambda_min }
    }

    /// Integrand differences `[d|a|^2, dI3, d|a|^4, dI3']` at `x`.
    fn integrand(&self, x: [f64; 2]) -> [f64; 4] {
        let ac = self.c.vector(x);
        let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        let diffs = |aw: [f64; 2]| {
            let af = [aw[0] + ac[0], aw[1] + ac[1]];
            // |a_f|^2 - |a_w|^2 = a_C . (2 a_w + a_C)
            let d2 = dot(ac, [2.0 * aw[0] + ac[0], 2.0 * aw[1] + ac[1]]);
            let nw = dot(aw, aw);
            let d3 = d2 * dot(af, x) + nw * dot(ac, x);
            let d4 = d2 * (dot(af, af) + nw);
            (d2, d3, d4)
        };
        let (d2, d3, d4) = diffs(self.w.as_ref().map_or([0.0, 0.0], |w| w.vector(x)));
        let (_, d3p, _) = diffs(self.wp.as_ref().map_or([0.0, 0.0], |w| w.vector(x)));
        [d2, d3, d4, d3p]
    }
}

/// Tensor Gauss rule over the cell `[x0, x0 + h] x [y0, y0 + h]`.
fn cell_rule<F: Fn([f64; 2]) -> [f64; 4]>(f: &F, x0: f64, y0: f64, h: f64, order: usize) -> [f64; 4] {
    let (nodes, weights) = gauss_legendre(order);
    let mut acc = [0.0; 4];
    for (xi, wi) in nodes.iter().zip(weights) {
        for (yj, wj) in nodes.iter().zip(weights) {
            let v = f([x0 + 0.5 * h * (1.0 + xi), y0 + 0.5 * h * (1.0 + yj)]);
            let w = 0.25 * h * h * wi * wj;
            for (a, b) in acc.iter_mut().zip(v) {
                *a += w * b;
            }
        }
    }
    acc
}

/// Integral over `[-s, s]^2` with the 12 outer subcells of the 4x4 split
/// handled directly and the central 2x2 block refined recursively.
fn central_square<F: Fn([f64; 2]) -> [f64; 4]>(f: &F, s: f64, stop: f64, order: usize, depth: usize) -> [f64; 4] {
    let h = 0.5 * s;
    let mut acc = [0.0; 4];
    let recurse = h > stop && depth > 0;
    for i in 0..4 {
        for j in 0..4 {
            let inner = (1..=2).contains(&i) && (1..=2).contains(&j);
            if inner && recurse {
                continue;
            }
            let v = cell_rule(f, -s + i as f64 * h, -s + j as f64 * h, h, order);
            for (a, b) in acc.iter_mut().zip(v) {
                *a += b;
            }
        }
    }
    if recurse {
        let v = central_square(f, h, stop, order, depth - 1);
        for (a, b) in acc.iter_mut().zip(v) {
            *a += b;
        }
    }
    acc
}

fn integrate_torus<F: Fn([f64; 2]) -> [f64; 4]>(f: &F, side: f64, quad: &QuadratureSpec, stop: f64) -> [f64; 4] {
    let h = 1.0 / quad.cells_per_unit as f64;
    let per_side = (side * quad.cells_per_unit as f64).round() as i64;
    let half = per_side / 2;
    let mut rows = Vec::with_capacity(per_side as usize);
    for i in -half..half {
        let mut row = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for j in -half..half {
            if (i == -1 || i == 0) && (j == -1 || j == 0) {
                continue;
            }
            let v = cell_rule(f, i as f64 * h, j as f64 * h, h, quad.order);
            for (r, b) in row.iter_mut().zip(v) {
                r.push(b);
            }
        }
        rows.push(row.map(|r| pairwise_sum(&r)));
    }
    let mut total: [f64; 4] = std::array::from_fn(|c| pairwise_sum(&rows.iter().map(|r| r[c]).collect::<Vec<_>>()));
    let centre = central_square(f, h, stop, quad.order, quad.max_depth);
    for (a, b) in total.iter_mut().zip(centre) {
        *a += b;
    }
    total
}

/// Theta family and `eps^Q_k` on the torus of exponent `j`, by quadrature.
pub fn theta_family_raw(k: u32, l: u32, n: u32, j: u32, quad: &QuadratureSpec) -> Result<ThetaFamily> {
    quad.validate()?;
    let side = (l as f64).powi(j as i32);
    let fields = Fields::new(l, k, side, quad.tol);
    let stop = fields.lambda_min.sqrt() / 4.0;
    let f = |x: [f64; 2]| fields.integrand(x);
    let [d2, d3, d4, d3p] = integrate_torus(&f, side, quad, stop);
    let nf = n as f64;
    Ok(ThetaFamily {
        theta: (4.0 - 8.0 * nf) * d3,
        theta_p: 8.0 * d3p,
        theta_v: -16.0 * d3p,
        eps_q: (4.0 * nf * nf - 2.0 * nf) * d4,
        beta_quad: 4.0 * (nf - 1.0) * d2,
    })
}

/// Theta family with a convergence check against the half-size grid.
/// Fails when the two disagree by more than 5%.
pub fn theta_family_k(k: u32, l: u32, n: u32, j: u32, quad: &QuadratureSpec) -> Result<(ThetaFamily, f64)> {
    let coarse = theta_family_raw(k, l, n, j, quad)?;
    let fine = theta_family_raw(k, l, n, j, &quad.refined())?;
    let drift = coarse.max_rel_change(&fine);
    if drift > 0.05 {
        return Err(Error::Numerical(format!(
            "quadrature for k={k}, j={j} not converged: relative change {drift:.3e} on refinement ({coarse:?} vs {fine:?})"
        )));
    }
    Ok((fine, drift))
}

/// `eps^Q_k` alone (same quadrature as the theta family).
pub fn eps_q_k(k: u32, l: u32, n: u32, j: u32, quad: &QuadratureSpec) -> Result<f64> {
    Ok(theta_family_raw(k, l, n, j, quad)?.eps_q)
}

/// One row of the coefficient table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub k: u32,
    pub beta: f64,
    pub beta_prime: f64,
    pub theta: f64,
    pub theta_p: f64,
    pub theta_v: f64,
    #[serde(rename = "eps_Q")]
    pub eps_q: f64,
}

/// Fitted constants of the coefficient bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedConstants {
    /// `min_k beta_k` and `max_k beta_k`.
    pub beta_min: f64,
    pub beta_max: f64,
    /// `C_-`, `C_+` with `(n-1) C_- <= beta_k <= (n-1) C_+`.
    pub c_minus: f64,
    pub c_plus: f64,
    pub beta_prime_min: f64,
    pub beta_prime_max: f64,
    /// `C` with `|theta_k|, |theta^p_k|, |theta^v_k| <= C`.
    pub c_theta: f64,
}

/// Metadata recorded alongside a table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub spec: CoeffSpec,
    pub big_n: u32,
    pub quadrature: Option<QuadratureSpec>,
    /// Torus exponent used at each k.
    pub torus_exponents: Vec<u32>,
    /// Relative change of the quadrature coefficients on grid refinement, per k.
    pub refinement_drift: Vec<f64>,
    /// `eps^Q` divides the vacuum term by the torus volume; values depend on it.
    pub eps_volume_note: String,
}

/// Coefficients for `k = 0 .. N-1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub rows: Vec<CoefficientRow>,
    pub meta: TableMeta,
    pub fitted: FittedConstants,
}

impl CoefficientTable {
    pub fn from_rows(rows: Vec<CoefficientRow>, meta: TableMeta) -> Result<Self> {
        if rows.is_empty() {
            return invalid("a coefficient table needs at least one row");
        }
        let n1 = (meta.spec.n as f64 - 1.0).max(f64::MIN_POSITIVE);
        let fold = |f: fn(&CoefficientRow) -> f64, init: f64, op: fn(f64, f64) -> f64| rows.iter().map(f).fold(init, op);
        let beta_min = fold(|r| r.beta, f64::INFINITY, f64::min);
        let beta_max = fold(|r| r.beta, f64::NEG_INFINITY, f64::max);
        let fitted = FittedConstants {
            beta_min,
            beta_max,
            c_minus: beta_min / n1,
            c_plus: beta_max / n1,
            beta_prime_min: fold(|r| r.beta_prime, f64::INFINITY, f64::min),
            beta_prime_max: fold(|r| r.beta_prime, f64::NEG_INFINITY, f64::max),
            c_theta: fold(|r| r.theta.abs().max(r.theta_p.abs()).max(r.theta_v.abs()), 0.0, f64::max),
        };
        Ok(Self { rows, meta, fitted })
    }

    /// A table with constant coefficients, for tests and examples.
    pub fn constant(big_n: u32, beta: f64, beta_prime: f64, theta: f64, theta_p: f64, theta_v: f64) -> Self {
        let rows = (0..big_n)
            .map(|k| CoefficientRow { k, beta, beta_prime, theta, theta_p, theta_v, eps_q: 0.0 })
            .collect();
        let meta = TableMeta {
            spec: CoeffSpec::default(),
            big_n,
            quadrature: None,
            torus_exponents: vec![0; big_n as usize],
            refinement_drift: vec![0.0; big_n as usize],
            eps_volume_note: "synthetic table".into(),
        };
        Self::from_rows(rows, meta).expect("nonempty")
    }

    pub fn big_n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> &CoefficientRow {
        &self.rows[k]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read rows from CSV; metadata defaults to `spec` with no quadrature record.
    pub fn read_csv(path: &Path, spec: CoeffSpec) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let rows = rd.deserialize().collect::<std::result::Result<Vec<CoefficientRow>, _>>()?;
        let n = rows.len();
        let meta = TableMeta {
            spec,
            big_n: n as u32,
            quadrature: None,
            torus_exponents: (0..n as u32).map(|k| spec.torus_exponent(k, n as u32)).collect(),
            refinement_drift: vec![f64::NAN; n],
            eps_volume_note: format!("read from {}", path.display()),
        };
        Self::from_rows(rows, meta)
    }
}

/// Assemble the table for `k = 0 .. N-1`; steps are computed in parallel.
pub fn coefficient_table(big_n: u32, spec: &CoeffSpec, quad: &QuadratureSpec) -> Result<CoefficientTable> {
    if big_n == 0 {
        return invalid("N must be at least 1");
    }
    quad.validate()?;
    let ks: Vec<u32> = (0..big_n).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(ks.len());
    let chunk = ks.len().div_ceil(threads);
    let results: Vec<Result<(CoefficientRow, u32, f64)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ks
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&k| {
                            let j = spec.torus_exponent(k, big_n);
                            let torus = spec.torus(j)?;
                            let (fam, drift) = theta_family_k(k, spec.l, spec.n, j, quad)?;
                            let row = CoefficientRow {
                                k,
                                beta: beta_k(k, &torus)?,
                                beta_prime: beta_prime_k(k, &torus)?,
                                theta: fam.theta,
                                theta_p: fam.theta_p,
                                theta_v: fam.theta_v,
                                eps_q: fam.eps_q,
                            };
                            Ok((row, j, drift))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("coefficient worker panicked")).collect()
    });
    let mut rows = Vec::with_capacity(ks.len());
    let mut js = Vec::with_capacity(ks.len());
    let mut drifts = Vec::with_capacity(ks.len());
    for r in results {
        let (row, j, d) = r?;
        rows.push(row);
        js.push(j);
        drifts.push(d);
    }
    let meta = TableMeta {
        spec: *spec,
        big_n,
        quadrature: Some(*quad),
        torus_exponents: js,
        refinement_drift: drifts,
        eps_volume_note: "eps^Q is the vacuum term divided by the torus volume L^{2j}; it depends on j".into(),
    };
    CoefficientTable::from_rows(rows, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_equal_one_kills_beta() {
        let t = TorusSpec::new(2, 3, 2).unwrap();
        for k in 0..5 {
            assert_eq!(beta_k_with_n(k, &t, 1).unwrap(), 0.0);
        }
    }

    #[test]
    fn beta_positive() {
        for k in 0..20 {
            let t = TorusSpec::new(2, 4, 2).unwrap();
            assert!(beta_k(k, &t).unwrap() > 0.0);
            assert!(beta_prime_k(k, &t).unwrap() > 0.0);
        }
    }

    #[test]
    fn beta_prime_at_zero_is_pure_c() {
        let t = TorusSpec::new(2, 3, 2).unwrap();
        let set = momentum_lattice(&t, 1e-18, 1.0).unwrap();
        let direct: f64 = set
            .points
            .iter()
            .map(|p| {
                let p2 = p[0] * p[0] + p[1] * p[1];
                4.0 * ((-p2).exp() - (-4.0 * p2).exp()).powi(2) / p2
            })
            .sum::<f64>()
            * set.weight;
        assert!((beta_prime_k(0, &t).unwrap() - direct).abs() < 1e-13);
    }

    #[test]
    fn beta_prime_tracks_beta_over_n_minus_one() {
        let t = TorusSpec::new(2, 4, 3).unwrap();
        let r = |k| beta_prime_k(k, &t).unwrap() / (beta_k(k, &t).unwrap() / 2.0);
        assert!((r(12) - 1.0).abs() < (r(2) - 1.0).abs());
        assert!((r(16) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn beta_quadrature_matches_momentum_sum() {
        let t = TorusSpec::new(2, 3, 2).unwrap();
        let quad = QuadratureSpec::default();
        for k in [0, 1, 3] {
            let fam = theta_family_raw(k, 2, 2, 3, &quad).unwrap();
            let b = beta_k(k, &t).unwrap();
            assert!((fam.beta_quad - b).abs() / b < 2e-3, "k={k}: {} vs {b}", fam.beta_quad);
        }
    }

    #[test]
    fn theta_family_is_grid_stable() {
        let quad = QuadratureSpec::default();
        let (fam, drift) = theta_family_k(0, 2, 2, 3, &quad).unwrap();
        assert!(drift < 0.01, "drift {drift}");
        assert!(fam.theta.is_finite() && fam.eps_q.is_finite());
        // w'_0 = 0, so theta^v / theta^p = -2 exactly
        assert!((fam.theta_v + 2.0 * fam.theta_p).abs() < 1e-15);
    }

    #[test]
    fn quadrature_spec_validation() {
        let q = QuadratureSpec { cells_per_unit: 4, ..Default::default() };
        assert!(q.validate().is_err());
        let q = QuadratureSpec { cells_per_unit: 9, ..Default::default() };
        assert!(q.validate().is_err());
    }

    #[test]
    fn torus_exponent_caps() {
        let s = CoeffSpec::default();
        assert_eq!(s.torus_exponent(0, 32), 4);
        assert_eq!(s.torus_exponent(30, 32), 2);
        assert_eq!(s.torus_exponent(32, 32), 0);
    }
}
