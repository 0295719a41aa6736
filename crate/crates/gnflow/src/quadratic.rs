//! The explicit quadratic flow `gbar_{k+1} = gbar_k + beta_k gbar_k^2` with
//! `gbar_N = g_f`, the field strength `zbar_{k+1} = zbar_k + theta_k gbar_k^2`
//! with `zbar_0 = 0`, and the summation bounds built on them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientTable;
use crate::error::{invalid, Error, Result};

/// `gbar_0 .. gbar_N` and `zbar_0 .. zbar_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTrajectory {
    pub g_f: f64,
    pub gbar: Vec<f64>,
    pub zbar: Vec<f64>,
}

impl QuadraticTrajectory {
    pub fn big_n(&self) -> usize {
        self.gbar.len() - 1
    }
}

/// Unique positive root of `beta x^2 + x - g_next = 0`.
pub fn backward_step(beta: f64, g_next: f64) -> f64 {
    if beta == 0.0 {
        return g_next;
    }
    // (-1 + sqrt(1 + 4 b g)) / (2 b) = 2 g / (1 + sqrt(1 + 4 b g)), stable for small b g
    2.0 * g_next / (1.0 + (1.0 + 4.0 * beta * g_next).sqrt())
}

/// Backward recursion from `gbar_N = g_f`.
pub fn solve_gbar(g_f: f64, table: &CoefficientTable) -> Result<Vec<f64>> {
    if !(g_f > 0.0) || !g_f.is_finite() {
        return invalid(format!("g_f must be positive and finite, got {g_f}"));
    }
    let n = table.big_n();
    for (k, r) in table.rows.iter().enumerate() {
        if r.beta < 0.0 {
            return Err(Error::Domain(format!("beta_{k} = {} is negative; the flow needs beta_k > 0", r.beta)));
        }
        if r.beta * g_f > 1.0 {
            return Err(Error::Domain(format!("smallness fails at k={k}: beta_k g_f = {} > 1", r.beta * g_f)));
        }
    }
    let mut g = vec![0.0; n + 1];
    g[n] = g_f;
    for k in (0..n).rev() {
        g[k] = backward_step(table.row(k).beta, g[k + 1]);
    }
    Ok(g)
}

/// Max relative error of the forward map `g + beta g^2` against the stored values.
pub fn round_trip_residual(gbar: &[f64], table: &CoefficientTable) -> f64 {
    (0..gbar.len() - 1)
        .map(|k| {
            let fwd = gbar[k] + table.row(k).beta * gbar[k] * gbar[k];
            (fwd - gbar[k + 1]).abs() / gbar[k + 1]
        })
        .fold(0.0, f64::max)
}

/// `zbar_k = sum_{l<k} theta_l gbar_l^2`.
pub fn solve_zbar(gbar: &[f64], table: &CoefficientTable) -> Vec<f64> {
    let mut z = vec![0.0; gbar.len()];
    for k in 0..gbar.len() - 1 {
        z[k + 1] = z[k] + table.row(k).theta * gbar[k] * gbar[k];
    }
    z
}

pub fn trajectory(g_f: f64, table: &CoefficientTable) -> Result<QuadraticTrajectory> {
    let gbar = solve_gbar(g_f, table)?;
    let zbar = solve_zbar(&gbar, table);
    Ok(QuadraticTrajectory { g_f, gbar, zbar })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub k: usize,
    pub gbar: f64,
    pub lower: f64,
    pub upper: f64,
}

impl SandwichRow {
    pub fn holds(&self) -> bool {
        let eps = 1e-15 * self.gbar;
        self.lower <= self.gbar + eps && self.gbar <= self.upper + eps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub c_minus: f64,
    pub c_plus: f64,
    pub rows: Vec<SandwichRow>,
    pub failing: Vec<usize>,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.failing.is_empty()
    }
}

/// `g_f / (1 + C+ g_f (N-k)) <= gbar_k <= g_f / (1 + C- g_f (N-k) / 2)` with
/// `C- <= beta_k <= C+` taken from the table.
pub fn sandwich_check(traj: &QuadraticTrajectory, table: &CoefficientTable) -> SandwichReport {
    let (cm, cp) = (table.fitted.beta_min, table.fitted.beta_max);
    let n = traj.big_n();
    let g_f = traj.g_f;
    let rows: Vec<SandwichRow> = traj
        .gbar
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            let d = (n - k) as f64;
            SandwichRow { k, gbar: g, lower: g_f / (1.0 + cp * g_f * d), upper: g_f / (1.0 + 0.5 * cm * g_f * d) }
        })
        .collect();
    let failing = rows.iter().filter(|r| !r.holds()).map(|r| r.k).collect();
    SandwichReport { c_minus: cm, c_plus: cp, rows, failing }
}

/// `max_k |zbar_k| / gbar_k`.
pub fn zbar_ratio(traj: &QuadraticTrajectory) -> f64 {
    traj.zbar.iter().zip(&traj.gbar).map(|(z, g)| z.abs() / g).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSumBound {
    pub n: u32,
    pub m: u32,
    /// Smallest `C` with `sum_{l<=k} gbar_l^n |log gbar_l|^m <= C gbar_{k+1}^{n-1} |log gbar_{k+1}|^m`.
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaProduct {
    pub gamma: f64,
    /// Extremes over `l < k` of `prod_{i=l}^{k-1} (1 + gamma beta_i gbar_i) / (gbar_k / gbar_l)^gamma`.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl GammaProduct {
    pub fn passed(&self) -> bool {
        self.min_ratio >= 0.5 && self.max_ratio <= 1.5
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumBoundsReport {
    /// Smallest `C` with `sum_{l=j}^k gbar_l <= C |log gbar_j|`.
    pub linear_constant: f64,
    pub power_sums: Vec<PowerSumBound>,
    pub gamma_products: Vec<GammaProduct>,
    /// Ceiling on the fitted constants; exceeding it fails the report.
    pub ceiling: f64,
}

impl SumBoundsReport {
    pub fn passed(&self) -> bool {
        let consts_ok = self.linear_constant.is_finite()
            && self.linear_constant <= self.ceiling
            && self.power_sums.iter().all(|p| p.constant.is_finite() && p.constant <= self.ceiling);
        consts_ok && self.gamma_products.iter().all(GammaProduct::passed)
    }
}

pub const DEFAULT_GAMMAS: [f64; 3] = [1.0, std::f64::consts::SQRT_2, 2.0];
pub const DEFAULT_POWERS: [(u32, u32); 3] = [(2, 0), (2, 1), (3, 1)];

pub fn sum_bounds_check(traj: &QuadraticTrajectory, table: &CoefficientTable, ceiling: f64) -> SumBoundsReport {
    let g = &traj.gbar;
    let n = traj.big_n();
    let lg = |x: f64| x.ln().abs();

    let mut linear_constant: f64 = 0.0;
    for j in 0..=n {
        let mut s = 0.0;
        for &gl in &g[j..=n] {
            s += gl;
            linear_constant = linear_constant.max(s / lg(g[j]));
        }
    }

    let power_sums = DEFAULT_POWERS
        .iter()
        .map(|&(pn, pm)| {
            let mut s = 0.0;
            let mut c: f64 = 0.0;
            for k in 0..n {
                s += g[k].powi(pn as i32) * lg(g[k]).powi(pm as i32);
                let rhs = g[k + 1].powi(pn as i32 - 1) * lg(g[k + 1]).powi(pm as i32);
                c = c.max(s / rhs);
            }
            PowerSumBound { n: pn, m: pm, constant: c }
        })
        .collect();

    let gamma_products = DEFAULT_GAMMAS
        .iter()
        .map(|&gamma| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for l in 0..n {
                let mut log_prod = 0.0;
                for k in l + 1..=n {
                    log_prod += (gamma * table.row(k - 1).beta * g[k - 1]).ln_1p();
                    let r = (log_prod - gamma * (g[k] / g[l]).ln()).exp();
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
            if n == 0 {
                (lo, hi) = (1.0, 1.0);
            }
            GammaProduct { gamma, min_ratio: lo, max_ratio: hi }
        })
        .collect();

    SumBoundsReport { linear_constant, power_sums, gamma_products, ceiling }
}

#[derive(Serialize)]
struct TrajectoryRecord {
    k: usize,
    gbar: f64,
    zbar: f64,
    lower_candy: f64,
    upper_candy: f64,
}

pub fn write_trajectory_csv(path: &Path, traj: &QuadraticTrajectory, sandwich: &SandwichReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (r, z) in sandwich.rows.iter().zip(&traj.zbar) {
        w.serialize(TrajectoryRecord { k: r.k, gbar: r.gbar, zbar: *z, lower_candy: r.lower, upper_candy: r.upper })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_beta_is_flat() {
        let t = CoefficientTable::constant(10, 0.0, 0.0, 0.0, 0.0, 0.0);
        let g = solve_gbar(0.01, &t).unwrap();
        assert!(g.iter().all(|&x| x == 0.01));
        assert!(solve_zbar(&g, &t).iter().all(|&z| z == 0.0));
    }

    #[test]
    fn single_step_closed_form() {
        let t = CoefficientTable::constant(1, 1.0, 0.0, 0.3, 0.0, 0.0);
        let tr = trajectory(0.01, &t).unwrap();
        let expected = (-1.0 + 1.04f64.sqrt()) / 2.0;
        assert!((tr.gbar[0] - expected).abs() < 1e-16);
        assert!((tr.zbar[1] - 0.3 * expected * expected).abs() < 1e-18);
    }

    #[test]
    fn domain_errors() {
        let t = CoefficientTable::constant(3, 200.0, 0.0, 0.0, 0.0, 0.0);
        match solve_gbar(0.01, &t) {
            Err(Error::Domain(m)) => assert!(m.contains("k=0")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(solve_gbar(0.0, &t), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gamma_one_telescopes() {
        let t = CoefficientTable::constant(40, 0.4, 0.4, -0.2, 0.1, -0.2);
        let tr = trajectory(0.01, &t).unwrap();
        let rep = sum_bounds_check(&tr, &t, 1e6);
        let g1 = &rep.gamma_products[0];
        assert!((g1.min_ratio - 1.0).abs() < 1e-12 && (g1.max_ratio - 1.0).abs() < 1e-12);
        assert!(rep.passed());
    }

    #[test]
    fn sandwich_tight_at_final_step() {
        let t = CoefficientTable::constant(16, 0.4, 0.4, 0.0, 0.0, 0.0);
        let tr = trajectory(0.02, &t).unwrap();
        let c = sandwich_check(&tr, &t);
        let last = c.rows.last().unwrap();
        assert_eq!(last.lower, 0.02);
        assert_eq!(last.upper, 0.02);
        assert!(c.passed());
    }
}
