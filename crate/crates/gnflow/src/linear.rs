//! Linearized flow around the quadratic trajectory.
//!
//! Sequences carry five components per step, `(e, g, z, p, v)`, where `e` is a
//! scalar surrogate for the norm of the irrelevant part. `S0` solves
//! `y_{k+1} = L_k y_k + r_k` with null boundary data `g_N = 0`,
//! `e_0 = z_0 = p_0 = v_0 = 0`; `S(t, x)` solves the same problem with
//! `L_k` replaced by `D Phi^t_k(x_k)` through a Neumann series around `S0`.

use nalgebra::{DMatrix, DVector, Matrix5};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientRow, CoefficientTable};
use crate::error::{invalid, Error, Result};

pub const E: usize = 0;
pub const G: usize = 1;
pub const Z: usize = 2;
pub const P: usize = 3;
pub const V: usize = 4;

/// Per-step vectors `x_0 .. x_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceVector(pub Vec<[f64; 5]>);

impl SequenceVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![[0.0; 5]; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(x, y)| std::array::from_fn(|c| x[c] + a * y[c])).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self(self.0.iter().map(|x| x.map(|v| a * v)).collect())
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.0.iter().map(|x| x[c]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.iter().all(|v| v.is_finite()))
    }
}

/// The explicit quadratic map on `(g, z, p, v)`.
pub fn phi_bar(row: &CoefficientRow, [g, z, p, v]: [f64; 4]) -> [f64; 4] {
    let (b, bp) = (row.beta, row.beta_prime);
    [
        g + b * g * g - 2.0 * bp * g * p - 4.0 * bp * g * v,
        z + row.theta * g * g - row.theta_p * g * p - row.theta_v * g * v,
        p - 2.0 * bp * g * v,
        v - bp * g * p,
    ]
}

/// Jacobian of [`phi_bar`] in the order `(g, z, p, v)`.
pub fn jacobian(row: &CoefficientRow, [g, _z, p, v]: [f64; 4]) -> [[f64; 4]; 4] {
    let (b, bp) = (row.beta, row.beta_prime);
    [
        [1.0 + 2.0 * b * g - 2.0 * bp * p - 4.0 * bp * v, 0.0, -2.0 * bp * g, -4.0 * bp * g],
        [2.0 * row.theta * g - row.theta_p * p - row.theta_v * v, 1.0, -row.theta_p * g, -row.theta_v * g],
        [-2.0 * bp * v, 0.0, 1.0, -2.0 * bp * g],
        [-bp * p, 0.0, -bp * g, 1.0],
    ]
}

/// Embed a `(g, z, p, v)` block into a 5x5 matrix with a zero `e` row and column.
pub fn embed(j: &[[f64; 4]; 4]) -> Matrix5<f64> {
    let mut m = Matrix5::zeros();
    for a in 0..4 {
        for b in 0..4 {
            m[(a + 1, b + 1)] = j[a][b];
        }
    }
    m
}

/// Reference sequence `xbar = (ebar, gbar, zbar, 0, 0)` and the coefficient table.
#[derive(Clone, Debug)]
pub struct LinearContext<'a> {
    pub table: &'a CoefficientTable,
    pub xbar: SequenceVector,
}

impl<'a> LinearContext<'a> {
    pub fn new(table: &'a CoefficientTable, gbar: &[f64], zbar: &[f64], ebar: Option<&[f64]>) -> Result<Self> {
        let n = table.big_n();
        if gbar.len() != n + 1 || zbar.len() != n + 1 || ebar.is_some_and(|e| e.len() != n + 1) {
            return invalid(format!("reference sequences must have length N+1 = {}", n + 1));
        }
        let xbar = (0..=n).map(|k| [ebar.map_or(0.0, |e| e[k]), gbar[k], zbar[k], 0.0, 0.0]).collect();
        Ok(Self { table, xbar: SequenceVector(xbar) })
    }

    pub fn big_n(&self) -> usize {
        self.table.big_n()
    }

    pub fn gbar(&self, k: usize) -> f64 {
        self.xbar.0[k][G]
    }

    /// `L_k`, the Jacobian at `xbar_k` with a zero `e` row.
    pub fn lk(&self, k: usize) -> Matrix5<f64> {
        let x = self.xbar.0[k];
        embed(&jacobian(self.table.row(k), [x[G], x[Z], x[P], x[V]]))
    }

    /// `X_w` norm: weights `gbar^-3` on e, `gbar^-2 |log gbar|^-1` on g and z, `gbar^-2` on p and v.
    pub fn norm_w(&self, y: &SequenceVector) -> f64 {
        y.0.iter()
            .enumerate()
            .map(|(k, x)| {
                let g = self.gbar(k);
                let (w3, w2) = (g.powi(-3), g.powi(-2));
                let wl = w2 / g.ln().abs();
                (w3 * x[E].abs()).max(wl * x[G].abs()).max(wl * x[Z].abs()).max(w2 * x[P].abs()).max(w2 * x[V].abs())
            })
            .fold(0.0, f64::max)
    }

    /// `X_r` norm over the inhomogeneities `r_0 .. r_{N-1}`: weight `gbar_k^-3` on all components.
    pub fn norm_r(&self, r: &SequenceVector) -> f64 {
        r.0.iter()
            .take(self.big_n())
            .enumerate()
            .map(|(k, x)| self.gbar(k).powi(-3) * x.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .fold(0.0, f64::max)
    }

    /// Unique solution of `y_{k+1} = L_k y_k + r_k` with null boundary data.
    pub fn s0_apply(&self, r: &SequenceVector) -> SequenceVector {
        let n = self.big_n();
        let mut y = SequenceVector::zeros(n + 1);
        for k in 0..n {
            y.0[k + 1][E] = r.0[k][E];
        }
        // (p, v) = pt (sqrt2, -1) + vt (sqrt2, 1) diagonalizes [[1, -2b], [-b, 1]]
        // with eigenvalues 1 + sqrt2 b and 1 - sqrt2 b.
        let s2 = std::f64::consts::SQRT_2;
        let (mut pt, mut vt) = (0.0, 0.0);
        for k in 0..n {
            let b = self.table.row(k).beta_prime * self.gbar(k);
            let (rp, rv) = (r.0[k][P], r.0[k][V]);
            let rpt = 0.5 * (rp / s2 - rv);
            let rvt = 0.5 * (rp / s2 + rv);
            pt = (1.0 + s2 * b) * pt + rpt;
            vt = (1.0 - s2 * b) * vt + rvt;
            y.0[k + 1][P] = s2 * (pt + vt);
            y.0[k + 1][V] = vt - pt;
        }
        for k in (0..n).rev() {
            let row = self.table.row(k);
            let gb = self.gbar(k);
            let rg = r.0[k][G] - 2.0 * row.beta_prime * gb * y.0[k][P] - 4.0 * row.beta_prime * gb * y.0[k][V];
            y.0[k][G] = (y.0[k + 1][G] - rg) / (1.0 + 2.0 * row.beta * gb);
        }
        for k in 0..n {
            let row = self.table.row(k);
            let gb = self.gbar(k);
            let yk = y.0[k];
            y.0[k + 1][Z] = yk[Z] + 2.0 * row.theta * gb * yk[G] - row.theta_p * gb * yk[P] - row.theta_v * gb * yk[V] + r.0[k][Z];
        }
        y
    }

    /// Blocks `L_k` for `k < N`.
    pub fn l_blocks(&self) -> Vec<Matrix5<f64>> {
        (0..self.big_n()).map(|k| self.lk(k)).collect()
    }

    /// Random `r` with unit `X_r` norm (each entry `gbar_k^3 u`, `|u| <= 1`, one entry saturated).
    pub fn random_unit_r<R: Rng>(&self, rng: &mut R) -> SequenceVector {
        let n = self.big_n();
        let mut r = SequenceVector::zeros(n + 1);
        for k in 0..n {
            let g3 = self.gbar(k).powi(3);
            for c in 0..5 {
                r.0[k][c] = g3 * rng.random_range(-1.0..1.0);
            }
        }
        let k = rng.random_range(0..n);
        let c = rng.random_range(0..5);
        r.0[k][c] = self.gbar(k).powi(3) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        r
    }
}

/// Max-norm recursion residual of `y_{k+1} = M_k y_k + r_k` and of the null boundary data.
pub fn recursion_residual(blocks: &[Matrix5<f64>], y: &SequenceVector, r: &SequenceVector) -> (f64, f64) {
    let mut rec: f64 = 0.0;
    for (k, m) in blocks.iter().enumerate() {
        let yk = nalgebra::Vector5::from_row_slice(&y.0[k]);
        let pred = m * yk;
        for c in 0..5 {
            rec = rec.max((y.0[k + 1][c] - pred[c] - r.0[k][c]).abs());
        }
    }
    let n = blocks.len();
    let bc = [y.0[0][E], y.0[0][Z], y.0[0][P], y.0[0][V], y.0[n][G]].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (rec, bc)
}

/// Dense direct solve of `y_{k+1} = M_k y_k + r_k` with null boundary data (test oracle).
pub fn dense_solve(blocks: &[Matrix5<f64>], r: &SequenceVector) -> Result<SequenceVector> {
    let n = blocks.len();
    let dim = 5 * (n + 1);
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    for (k, m) in blocks.iter().enumerate() {
        for c in 0..5 {
            let row = 5 * k + c;
            a[(row, 5 * (k + 1) + c)] = 1.0;
            for d in 0..5 {
                a[(row, 5 * k + d)] -= m[(c, d)];
            }
            b[row] = r.0[k][c];
        }
    }
    let bc = [(0, E), (0, Z), (0, P), (0, V), (n, G)];
    for (i, (k, c)) in bc.iter().enumerate() {
        a[(5 * n + i, 5 * k + c)] = 1.0;
    }
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("dense boundary-value system is singular".into()))?;
    Ok(SequenceVector((0..=n).map(|k| std::array::from_fn(|c| sol[5 * k + c])).collect()))
}

/// Perturbation of the explicit flow: `rho = (g*, z*, p*, v*)` and the `e` recursion.
pub trait FlowPerturbation {
    /// `(g*, z*, p*, v*)` at step `k`.
    fn rho(&self, k: usize, x: &[f64; 5]) -> [f64; 4];
    /// `d rho / d(e, g, z, p, v)` (rows `g*, z*, p*, v*`).
    fn drho(&self, k: usize, x: &[f64; 5]) -> [[f64; 5]; 4];
    /// `e_{k+1}` as a function of `x_k`.
    fn e_plus(&self, k: usize, x: &[f64; 5]) -> f64;
    fn de_plus(&self, k: usize, x: &[f64; 5]) -> [f64; 5];
}

/// Ball `xbar + radius B` in `X_w`, with per-component bounds
/// `|e - ebar| <= radius gbar^3`, `|g - gbar|, |z - zbar| <= radius gbar^2 |log gbar|`,
/// `|p|, |v| <= radius gbar^2`.
#[derive(Clone, Copy, Debug)]
pub struct Ball {
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallExit {
    pub k: usize,
    pub component: usize,
    /// `|x - xbar|` in units of the allowed bound.
    pub ratio: f64,
}

impl Ball {
    /// Largest ratio `|x - xbar| / bound` over all entries and where it occurs.
    pub fn worst(&self, ctx: &LinearContext, x: &SequenceVector) -> BallExit {
        let d = x.sub(&ctx.xbar);
        let mut worst = BallExit { k: 0, component: 0, ratio: 0.0 };
        for (k, dk) in d.0.iter().enumerate() {
            let g = ctx.gbar(k);
            let bounds = [g.powi(3), g * g * g.ln().abs(), g * g * g.ln().abs(), g * g, g * g];
            for c in 0..5 {
                let ratio = dk[c].abs() / (self.radius * bounds[c]);
                if ratio > worst.ratio {
                    worst = BallExit { k, component: c, ratio };
                }
            }
        }
        worst
    }

    pub fn contains(&self, ctx: &LinearContext, x: &SequenceVector) -> bool {
        self.worst(ctx, x).ratio <= 1.0
    }
}

/// `D Phi^t_k(x_k)`: e row from the model, `(g, z, p, v)` rows from the explicit map plus `t rho'`.
pub fn dphi_t<M: FlowPerturbation + ?Sized>(ctx: &LinearContext, model: &M, t: f64, k: usize, xk: &[f64; 5]) -> Matrix5<f64> {
    let mut m = embed(&jacobian(ctx.table.row(k), [xk[G], xk[Z], xk[P], xk[V]]));
    let de = model.de_plus(k, xk);
    for c in 0..5 {
        m[(E, c)] = de[c];
    }
    let dr = model.drho(k, xk);
    for a in 0..4 {
        for c in 0..5 {
            m[(a + 1, c)] += t * dr[a][c];
        }
    }
    m
}

/// `W_k(t, x) = D Phi^t_k(x_k) - L_k` for `k < N`; fails outside the ball.
pub fn w_build<M: FlowPerturbation + ?Sized>(
    ctx: &LinearContext,
    model: &M,
    t: f64,
    x: &SequenceVector,
    ball: Option<&Ball>,
) -> Result<Vec<Matrix5<f64>>> {
    if let Some(b) = ball {
        let w = b.worst(ctx, x);
        if w.ratio > 1.0 {
            return Err(Error::Domain(format!(
                "x leaves the ball at k={}, component {} (ratio {:.3})",
                w.k, w.component, w.ratio
            )));
        }
    }
    Ok((0..ctx.big_n()).map(|k| dphi_t(ctx, model, t, k, &x.0[k]) - ctx.lk(k)).collect())
}

fn apply_blocks(blocks: &[Matrix5<f64>], y: &SequenceVector) -> SequenceVector {
    let mut out = SequenceVector::zeros(blocks.len() + 1);
    for (k, m) in blocks.iter().enumerate() {
        let v = m * nalgebra::Vector5::from_row_slice(&y.0[k]);
        out.0[k] = [v[0], v[1], v[2], v[3], v[4]];
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeumannStats {
    pub iterations: usize,
    /// Ratio of successive update norms at the end (empirical contraction of `S0 W`).
    pub contraction: f64,
    pub final_update: f64,
}

pub const NEUMANN_TOL: f64 = 1e-12;
pub const NEUMANN_CAP: usize = 200;

/// `y = (1 - S0 W)^{-1} S0 r` by fixed-point iteration `y <- S0 (W y + r)`.
pub fn s_apply_blocks(ctx: &LinearContext, w: &[Matrix5<f64>], r: &SequenceVector) -> Result<(SequenceVector, NeumannStats)> {
    let s0r = ctx.s0_apply(r);
    let scale = ctx.norm_w(&s0r).max(f64::MIN_POSITIVE);
    let mut y = s0r.clone();
    let mut prev_update = f64::INFINITY;
    let mut contraction: f64 = 0.0;
    for it in 1..=NEUMANN_CAP {
        let next = ctx.s0_apply(&apply_blocks(w, &y)).axpy(1.0, &s0r);
        let upd = ctx.norm_w(&next.sub(&y));
        if prev_update.is_finite() && prev_update > 0.0 {
            contraction = upd / prev_update;
        }
        y = next;
        if !y.is_finite() || (it > 3 && contraction >= 1.0 && upd > scale) {
            return Err(Error::Numerical(format!(
                "Neumann iteration diverges: empirical |S0 W| ~ {contraction:.3} after {it} iterations"
            )));
        }
        if upd <= NEUMANN_TOL * scale.max(ctx.norm_w(&y)) || upd == 0.0 {
            return Ok((y, NeumannStats { iterations: it, contraction, final_update: upd }));
        }
        prev_update = upd;
    }
    Err(Error::Numerical(format!(
        "Neumann iteration did not converge in {NEUMANN_CAP} steps: empirical |S0 W| ~ {contraction:.3}"
    )))
}

/// `S(t, x) r`.
pub fn s_apply<M: FlowPerturbation + ?Sized>(
    ctx: &LinearContext,
    model: &M,
    t: f64,
    x: &SequenceVector,
    r: &SequenceVector,
    ball: Option<&Ball>,
) -> Result<(SequenceVector, NeumannStats)> {
    let w = w_build(ctx, model, t, x, ball)?;
    s_apply_blocks(ctx, &w, r)
}

/// Power-iteration estimate of `|S0 W|` on `X_w`.
pub fn sw_norm_estimate(ctx: &LinearContext, w: &[Matrix5<f64>], iterations: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut y = ctx.s0_apply(&ctx.random_unit_r(&mut rng));
    let mut est = 0.0;
    for _ in 0..iterations {
        let ny = ctx.norm_w(&y);
        if ny == 0.0 {
            return 0.0;
        }
        y = y.scale(1.0 / ny);
        y = ctx.s0_apply(&apply_blocks(w, &y));
        est = ctx.norm_w(&y);
    }
    est
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct S0Report {
    pub big_n: usize,
    pub samples: usize,
    /// `max |S0 r|_{X_w}` over unit-`X_r` samples.
    pub s0_norm_estimate: f64,
    /// `max |S0 r - dense(r)|_{X_w} / |S0 r|_{X_w}`.
    pub oracle_difference: f64,
    pub max_recursion_residual: f64,
    pub max_boundary_residual: f64,
    /// Max deviation of the lower-right eigenvalues from `1 +- sqrt2 beta' gbar`.
    pub eigen_error: f64,
}

/// Random-sample check of `S0` against the dense oracle.
pub fn s0_report(ctx: &LinearContext, samples: usize, seed: u64) -> Result<S0Report> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let blocks = ctx.l_blocks();
    let mut rep = S0Report {
        big_n: ctx.big_n(),
        samples,
        s0_norm_estimate: 0.0,
        oracle_difference: 0.0,
        max_recursion_residual: 0.0,
        max_boundary_residual: 0.0,
        eigen_error: 0.0,
    };
    for _ in 0..samples {
        let r = ctx.random_unit_r(&mut rng);
        let y = ctx.s0_apply(&r);
        let d = dense_solve(&blocks, &r)?;
        let ny = ctx.norm_w(&y);
        rep.s0_norm_estimate = rep.s0_norm_estimate.max(ny / ctx.norm_r(&r));
        rep.oracle_difference = rep.oracle_difference.max(ctx.norm_w(&y.sub(&d)) / ny.max(f64::MIN_POSITIVE));
        let (rec, bc) = recursion_residual(&blocks, &y, &r);
        rep.max_recursion_residual = rep.max_recursion_residual.max(rec);
        rep.max_boundary_residual = rep.max_boundary_residual.max(bc);
    }
    for (k, m) in blocks.iter().enumerate() {
        let b = ctx.table.row(k).beta_prime * ctx.gbar(k);
        let block = nalgebra::Matrix2::new(m[(P, P)], m[(P, V)], m[(V, P)], m[(V, V)]);
        let mut ev: Vec<f64> = block.complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        let s2b = std::f64::consts::SQRT_2 * b;
        rep.eigen_error = rep.eigen_error.max((ev[0] - (1.0 - s2b)).abs()).max((ev[1] - (1.0 + s2b)).abs());
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadratic::trajectory;
    use rand::SeedableRng;

    fn table() -> CoefficientTable {
        CoefficientTable::constant(24, 0.44, 0.43, -0.21, 0.14, -0.28)
    }

    fn ctx(t: &CoefficientTable) -> LinearContext<'_> {
        let tr = trajectory(0.01, t).unwrap();
        LinearContext::new(t, &tr.gbar, &tr.zbar, None).unwrap()
    }

    #[test]
    fn identity_at_origin() {
        let t = table();
        let j = jacobian(t.row(0), [0.0; 4]);
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(j[a][b], if a == b { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn reference_entries() {
        let t = table();
        let c = ctx(&t);
        let l = c.lk(3);
        let gb = c.gbar(3);
        assert_eq!(l[(G, G)], 1.0 + 2.0 * 0.44 * gb);
        assert_eq!(l[(P, V)], -2.0 * 0.43 * gb);
        assert_eq!(l[(P, G)], 0.0);
        assert!((0..5).all(|c| l[(E, c)] == 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let t = table();
        let x = [0.011, -0.002, 0.0004, -0.0003];
        let j = jacobian(t.row(0), x);
        let h = 1e-6;
        for b in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[b] += h;
            xm[b] -= h;
            let (fp, fm) = (phi_bar(t.row(0), xp), phi_bar(t.row(0), xm));
            for a in 0..4 {
                assert!(((fp[a] - fm[a]) / (2.0 * h) - j[a][b]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn e_only_input() {
        let t = table();
        let c = ctx(&t);
        let mut r = SequenceVector::zeros(25);
        for k in 0..24 {
            r.0[k][E] = k as f64 * 1e-7;
        }
        let y = c.s0_apply(&r);
        for k in 0..24 {
            assert_eq!(y.0[k + 1][E], r.0[k][E]);
            assert!(y.0[k][1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn structured_matches_dense() {
        let t = table();
        let c = ctx(&t);
        let rep = s0_report(&c, 20, 7).unwrap();
        assert!(rep.oracle_difference < 1e-10, "{rep:?}");
        assert!(rep.max_recursion_residual < 1e-14);
        assert_eq!(rep.max_boundary_residual, 0.0);
        assert!(rep.eigen_error < 1e-12);
    }

    #[test]
    fn impulse_norm() {
        let t = table();
        let c = ctx(&t);
        let mut r = SequenceVector::zeros(25);
        r.0[5][G] = 1.0;
        assert!((c.norm_r(&r) - c.gbar(5).powi(-3)).abs() < 1e-6 * c.gbar(5).powi(-3));
        assert_eq!(c.norm_w(&SequenceVector::zeros(25)), 0.0);
    }

    struct Zero;
    impl FlowPerturbation for Zero {
        fn rho(&self, _: usize, _: &[f64; 5]) -> [f64; 4] {
            [0.0; 4]
        }
        fn drho(&self, _: usize, _: &[f64; 5]) -> [[f64; 5]; 4] {
            [[0.0; 5]; 4]
        }
        fn e_plus(&self, _: usize, _: &[f64; 5]) -> f64 {
            0.0
        }
        fn de_plus(&self, _: usize, _: &[f64; 5]) -> [f64; 5] {
            [0.0; 5]
        }
    }

    #[test]
    fn w_vanishes_at_reference() {
        let t = table();
        let c = ctx(&t);
        let w = w_build(&c, &Zero, 0.0, &c.xbar, Some(&Ball { radius: 0.125 })).unwrap();
        assert!(w.iter().all(|m| m.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn perturbed_solve_matches_dense() {
        let t = table();
        let c = ctx(&t);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut x = c.xbar.clone();
        for k in 0..=24 {
            let g = c.gbar(k);
            let l = g.ln().abs();
            x.0[k][G] += 0.1 * g * g * l * rng.random_range(-1.0..1.0);
            x.0[k][P] = 0.1 * g * g * rng.random_range(-1.0..1.0);
            x.0[k][V] = 0.1 * g * g * rng.random_range(-1.0..1.0);
        }
        x.0[24][G] = c.gbar(24);
        let w = w_build(&c, &Zero, 1.0, &x, Some(&Ball { radius: 0.125 })).unwrap();
        let r = c.random_unit_r(&mut rng);
        let (y, stats) = s_apply_blocks(&c, &w, &r).unwrap();
        assert!(stats.iterations < 30);
        let blocks: Vec<_> = (0..24).map(|k| c.lk(k) + w[k]).collect();
        let d = dense_solve(&blocks, &r).unwrap();
        assert!(c.norm_w(&y.sub(&d)) < 1e-10 * c.norm_w(&d));
        let (rec, bc) = recursion_residual(&blocks, &y, &r);
        assert!(rec < 1e-10 && bc == 0.0);
    }

    #[test]
    fn ball_rejects_far_points() {
        let t = table();
        let c = ctx(&t);
        let mut x = c.xbar.clone();
        x.0[4][P] = 1.0;
        assert!(matches!(w_build(&c, &Zero, 0.5, &x, Some(&Ball { radius: 0.125 })), Err(Error::Domain(_))));
    }
}
