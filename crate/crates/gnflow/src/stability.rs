//! Boundary-value solve of the full flow
//!
//! ```text
//! e_{k+1} = e+(x_k)
//! g_{k+1} = g_k + beta_k g_k^2 - 2 beta'_k g_k p_k - 4 beta'_k g_k v_k + g*_k
//! z_{k+1} = z_k + theta_k g_k^2 - theta^p_k g_k p_k - theta^v_k g_k v_k + z*_k
//! p_{k+1} = p_k - 2 beta'_k g_k v_k + p*_k
//! v_{k+1} = v_k - beta'_k g_k p_k + v*_k
//! ```
//!
//! with `g_N = g_f` and `e_0 = z_0 = p_0 = v_0 = 0`, by continuation in `t`
//! from the explicit flow, followed by a Newton polish.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientTable;
use crate::error::{invalid, Error, Result};
use crate::linear::{dphi_t, phi_bar, s_apply, Ball, FlowPerturbation, LinearContext, SequenceVector, E, G, P, V, Z};
use crate::quadratic::{trajectory, QuadraticTrajectory};

/// Golden angle, used for the deterministic sign sequences of the models.
pub const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Zero,
    Saturating,
    ECoupled,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "sat" | "saturating" => Ok(Self::Saturating),
            "ecoupled" | "e-coupled" => Ok(Self::ECoupled),
            _ => invalid(format!("unknown model {s:?} (expected zero, sat or ecoupled)")),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Saturating => "sat",
            Self::ECoupled => "ecoupled",
        }
    }
}

/// Finite-dimensional stand-in for the starred corrections and the `e` recursion.
///
/// All models use `e+ = kappa e + (1 - kappa) C_E g^3 / 8`. The saturating model
/// has `g*, p*, v* = C_E h^-4 g^3 s(k)` and `z* = C_E h^-2 g^3 s(k)` with
/// `s(k) = cos(golden_angle (k + 1) + phase)`; the e-coupled model replaces
/// `g*` by `h^-4 (C_E g^3 s(k) + e) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationModel {
    pub kind: ModelKind,
    pub c_e: f64,
    pub h: f64,
    pub kappa: f64,
    /// Phases of the sign sequences for `(g*, z*, p*, v*)`.
    pub phases: [f64; 4],
}

impl PerturbationModel {
    pub fn new(kind: ModelKind, c_e: f64, h: f64, kappa: f64) -> Result<Self> {
        if !(c_e > 0.0) || !(h > 0.0) {
            return invalid("C_E and h must be positive");
        }
        if !(0.0..1.0).contains(&kappa) {
            return invalid(format!("kappa must lie in [0, 1), got {kappa}"));
        }
        Ok(Self { kind, c_e, h, kappa, phases: [0.0, 1.0, 2.0, 3.0] })
    }

    pub fn sign(&self, k: usize, c: usize) -> f64 {
        (GOLDEN_ANGLE * (k as f64 + 1.0) + self.phases[c]).cos()
    }

    fn e_source(&self) -> f64 {
        (1.0 - self.kappa) * self.c_e / 8.0
    }
}

/// Zero, saturating and e-coupled models with `C_E = 1, h = 16, kappa = 0.5`.
pub fn default_models() -> Vec<PerturbationModel> {
    [ModelKind::Zero, ModelKind::Saturating, ModelKind::ECoupled]
        .into_iter()
        .map(|k| PerturbationModel::new(k, 1.0, 16.0, 0.5).expect("valid defaults"))
        .collect()
}

impl FlowPerturbation for PerturbationModel {
    fn rho(&self, k: usize, x: &[f64; 5]) -> [f64; 4] {
        let g3 = x[G].powi(3);
        let (h2, h4) = (self.h.powi(-2), self.h.powi(-4));
        let ce = self.c_e;
        match self.kind {
            ModelKind::Zero => [0.0; 4],
            ModelKind::Saturating => [
                ce * h4 * g3 * self.sign(k, 0),
                ce * h2 * g3 * self.sign(k, 1),
                ce * h4 * g3 * self.sign(k, 2),
                ce * h4 * g3 * self.sign(k, 3),
            ],
            ModelKind::ECoupled => [
                0.5 * h4 * (ce * g3 * self.sign(k, 0) + x[E]),
                ce * h2 * g3 * self.sign(k, 1),
                ce * h4 * g3 * self.sign(k, 2),
                ce * h4 * g3 * self.sign(k, 3),
            ],
        }
    }

    fn drho(&self, k: usize, x: &[f64; 5]) -> [[f64; 5]; 4] {
        let dg3 = 3.0 * x[G] * x[G];
        let (h2, h4) = (self.h.powi(-2), self.h.powi(-4));
        let ce = self.c_e;
        let mut d = [[0.0; 5]; 4];
        match self.kind {
            ModelKind::Zero => {}
            ModelKind::Saturating | ModelKind::ECoupled => {
                d[0][G] = ce * h4 * dg3 * self.sign(k, 0);
                d[1][G] = ce * h2 * dg3 * self.sign(k, 1);
                d[2][G] = ce * h4 * dg3 * self.sign(k, 2);
                d[3][G] = ce * h4 * dg3 * self.sign(k, 3);
                if self.kind == ModelKind::ECoupled {
                    d[0][G] *= 0.5;
                    d[0][E] = 0.5 * h4;
                }
            }
        }
        d
    }

    fn e_plus(&self, _k: usize, x: &[f64; 5]) -> f64 {
        self.kappa * x[E] + self.e_source() * x[G].powi(3)
    }

    fn de_plus(&self, _k: usize, x: &[f64; 5]) -> [f64; 5] {
        [self.kappa, 3.0 * self.e_source() * x[G] * x[G], 0.0, 0.0, 0.0]
    }
}

/// One step of the full map `Phi^t_k`.
pub fn phi_t(table: &CoefficientTable, model: &PerturbationModel, t: f64, k: usize, x: &[f64; 5]) -> [f64; 5] {
    let [g, z, p, v] = phi_bar(table.row(k), [x[G], x[Z], x[P], x[V]]);
    let r = model.rho(k, x);
    [model.e_plus(k, x), g + t * r[0], z + t * r[1], p + t * r[2], v + t * r[3]]
}

/// `ebar` with `ebar_0 = 0`, `ebar_{k+1} = e+(ebar_k, gbar_k, zbar_k, 0, 0)`.
pub fn ebar(traj: &QuadraticTrajectory, model: &PerturbationModel) -> Vec<f64> {
    let mut e = vec![0.0; traj.gbar.len()];
    for k in 0..traj.gbar.len() - 1 {
        e[k + 1] = model.e_plus(k, &[e[k], traj.gbar[k], traj.zbar[k], 0.0, 0.0]);
    }
    e
}

/// `(0, rho(x_k))` for `k < N`.
pub fn rho_sequence(model: &PerturbationModel, x: &SequenceVector) -> SequenceVector {
    let n = x.len() - 1;
    let mut r = SequenceVector::zeros(n + 1);
    for k in 0..n {
        let rho = model.rho(k, &x.0[k]);
        r.0[k] = [0.0, rho[0], rho[1], rho[2], rho[3]];
    }
    r
}

/// `Phi_k(x_k) - x_{k+1}` at `t = 1`.
pub fn flow_residual(table: &CoefficientTable, model: &PerturbationModel, x: &SequenceVector) -> SequenceVector {
    let n = x.len() - 1;
    let mut r = SequenceVector::zeros(n + 1);
    for k in 0..n {
        let f = phi_t(table, model, 1.0, k, &x.0[k]);
        r.0[k] = std::array::from_fn(|c| f[c] - x.0[k + 1][c]);
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub g_f: f64,
    pub steps_t: usize,
    /// Ball radius is `C_E / 8`.
    pub c_e: f64,
    /// Field-strength constant; `None` fits `max(1, 2 max_k |zbar_k| / gbar_k)`.
    pub c_z: Option<f64>,
    pub newton: bool,
    pub newton_tol: f64,
    pub newton_max: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self { g_f: 0.01, steps_t: 64, c_e: 1.0, c_z: None, newton: true, newton_tol: 1e-15, newton_max: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Max `|Phi_k(x_k) - x_{k+1}|` per component `(e, g, z, p, v)`.
    pub recursion: [f64; 5],
    /// `|g_N - g_f|, |e_0|, |z_0|, |p_0|, |v_0|`.
    pub boundary: [f64; 5],
    pub g_increasing: bool,
    /// Extremes of `g_k / gbar_k`.
    pub g_ratio_min: f64,
    pub g_ratio_max: f64,
    /// `max |z_k| / g_k`.
    pub z_over_g: f64,
    /// `max (|p_k|, |v_k|) / g_k^2`.
    pub pv_over_g2: f64,
    pub c_z: f64,
    pub c_e: f64,
}

impl ResidualReport {
    pub fn max_recursion(&self) -> f64 {
        self.recursion.iter().fold(0.0, |m: f64, v| m.max(*v))
    }

    pub fn boundary_exact(&self) -> bool {
        self.boundary.iter().all(|&b| b == 0.0)
    }

    pub fn domain_ok(&self) -> bool {
        self.g_increasing
            && self.g_ratio_min >= 0.8
            && self.g_ratio_max <= 1.25
            && self.z_over_g <= self.c_z
            && self.pv_over_g2 <= self.c_e
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_recursion() < tol && self.boundary_exact() && self.domain_ok()
    }
}

pub fn residual_verify(
    x: &SequenceVector,
    table: &CoefficientTable,
    model: &PerturbationModel,
    g_f: f64,
    gbar: &[f64],
    c_z: f64,
    c_e: f64,
) -> ResidualReport {
    let res = flow_residual(table, model, x);
    let n = x.len() - 1;
    let mut recursion = [0.0f64; 5];
    for rk in res.0.iter().take(n) {
        for c in 0..5 {
            recursion[c] = recursion[c].max(rk[c].abs());
        }
    }
    let x0 = x.0[0];
    let boundary = [(x.0[n][G] - g_f).abs(), x0[E].abs(), x0[Z].abs(), x0[P].abs(), x0[V].abs()];
    let g = x.component(G);
    let ratios: Vec<f64> = g.iter().zip(gbar).map(|(a, b)| a / b).collect();
    ResidualReport {
        recursion,
        boundary,
        g_increasing: g.windows(2).all(|w| w[1] > w[0]),
        g_ratio_min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        g_ratio_max: ratios.iter().copied().fold(0.0, f64::max),
        z_over_g: x.0.iter().map(|xk| xk[Z].abs() / xk[G]).fold(0.0, f64::max),
        pv_over_g2: x.0.iter().map(|xk| xk[P].abs().max(xk[V].abs()) / (xk[G] * xk[G])).fold(0.0, f64::max),
        c_z,
        c_e,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub model: ModelKind,
    pub params: SolveParams,
    pub xbar: SequenceVector,
    /// `x(1)` after the optional Newton polish.
    pub x: SequenceVector,
    /// `x(1)` straight from the integrator.
    pub x_rk: SequenceVector,
    /// Largest ball ratio seen along the path (must stay below 1).
    pub max_ball_ratio: f64,
    /// Largest deviation from the boundary data over all recorded `t`.
    pub boundary_drift: f64,
    pub max_neumann_iterations: usize,
    pub max_contraction: f64,
    pub newton_iterations: usize,
    pub residual_rk: f64,
    pub residuals: ResidualReport,
    pub eps: Vec<f64>,
    pub eps_star: Vec<f64>,
}

/// Fitted field-strength constant `max(1, 2 max_k |zbar_k| / gbar_k)`.
pub fn default_c_z(traj: &QuadraticTrajectory) -> f64 {
    (2.0 * crate::quadratic::zbar_ratio(traj)).max(1.0)
}

struct Tracker {
    max_ball: f64,
    max_iters: usize,
    max_contraction: f64,
}

fn rhs(
    ctx: &LinearContext,
    model: &PerturbationModel,
    ball: &Ball,
    t: f64,
    x: &SequenceVector,
    tracker: &mut Tracker,
) -> Result<SequenceVector> {
    let exit = ball.worst(ctx, x);
    tracker.max_ball = tracker.max_ball.max(exit.ratio);
    if exit.ratio > 1.0 {
        let names = ["e", "g", "z", "p", "v"];
        return Err(Error::Domain(format!(
            "path leaves the ball at t={t:.4}, k={}, component {} (ratio {:.3})",
            exit.k, names[exit.component], exit.ratio
        )));
    }
    let (y, stats) = s_apply(ctx, model, t, x, &rho_sequence(model, x), None)?;
    tracker.max_iters = tracker.max_iters.max(stats.iterations);
    tracker.max_contraction = tracker.max_contraction.max(stats.contraction);
    Ok(y)
}

/// Newton iteration `x <- x + S(1, x) (Phi(x) - shift x)`; keeps the boundary data.
pub fn newton_polish(
    ctx: &LinearContext,
    model: &PerturbationModel,
    x0: &SequenceVector,
    tol: f64,
    max_iter: usize,
) -> Result<(SequenceVector, usize)> {
    let mut x = x0.clone();
    for it in 0..max_iter {
        let r = flow_residual(ctx.table, model, &x);
        let size = r.0.iter().flat_map(|v| v.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        if size <= tol {
            return Ok((x, it));
        }
        let (d, _) = s_apply(ctx, model, 1.0, &x, &r, None)?;
        x = x.axpy(1.0, &d);
    }
    Ok((x, max_iter))
}

/// `D Phi^1_k(x_k)`.
pub fn full_jacobian(ctx: &LinearContext, model: &PerturbationModel, x: &SequenceVector, k: usize) -> nalgebra::Matrix5<f64> {
    dphi_t(ctx, model, 1.0, k, &x.0[k])
}

/// Continuation from `xbar` at `t = 0` to the full flow at `t = 1` with RK4.
pub fn continuation_solve(table: &CoefficientTable, model: &PerturbationModel, params: &SolveParams) -> Result<SolveReport> {
    if params.steps_t == 0 {
        return invalid("steps_t must be at least 1");
    }
    let traj = trajectory(params.g_f, table)?;
    let eb = ebar(&traj, model);
    let ctx = LinearContext::new(table, &traj.gbar, &traj.zbar, Some(&eb))?;
    let ball = Ball { radius: params.c_e / 8.0 };
    let c_z = params.c_z.unwrap_or_else(|| default_c_z(&traj));
    let n = table.big_n();

    let boundary_dev = |x: &SequenceVector| {
        let x0 = x.0[0];
        [(x.0[n][G] - params.g_f).abs(), x0[E].abs(), x0[Z].abs(), x0[P].abs(), x0[V].abs()]
            .into_iter()
            .fold(0.0f64, f64::max)
    };

    let mut tracker = Tracker { max_ball: 0.0, max_iters: 0, max_contraction: 0.0 };
    let mut x = ctx.xbar.clone();
    let mut drift: f64 = 0.0;
    let dt = 1.0 / params.steps_t as f64;
    for step in 0..params.steps_t {
        let t = step as f64 * dt;
        let k1 = rhs(&ctx, model, &ball, t, &x, &mut tracker)?;
        let k2 = rhs(&ctx, model, &ball, t + 0.5 * dt, &x.axpy(0.5 * dt, &k1), &mut tracker)?;
        let k3 = rhs(&ctx, model, &ball, t + 0.5 * dt, &x.axpy(0.5 * dt, &k2), &mut tracker)?;
        let k4 = rhs(&ctx, model, &ball, t + dt, &x.axpy(dt, &k3), &mut tracker)?;
        let incr = k1.axpy(2.0, &k2).axpy(2.0, &k3).axpy(1.0, &k4);
        x = x.axpy(dt / 6.0, &incr);
        drift = drift.max(boundary_dev(&x));
    }
    let exit = ball.worst(&ctx, &x);
    tracker.max_ball = tracker.max_ball.max(exit.ratio);

    let x_rk = x.clone();
    let residual_rk = residual_verify(&x_rk, table, model, params.g_f, &traj.gbar, c_z, params.c_e).max_recursion();
    let (x, newton_iterations) = if params.newton {
        newton_polish(&ctx, model, &x_rk, params.newton_tol, params.newton_max)?
    } else {
        (x_rk.clone(), 0)
    };
    let residuals = residual_verify(&x, table, model, params.g_f, &traj.gbar, c_z, params.c_e);
    let eps_star = eps_star_from_table(table, &x.component(G));
    let l = table.meta.spec.l as f64;
    let eps = epsilon_solve(&eps_star, l);

    Ok(SolveReport {
        model: model.kind,
        params: SolveParams { c_z: Some(c_z), ..params.clone() },
        xbar: ctx.xbar.clone(),
        x,
        x_rk,
        max_ball_ratio: tracker.max_ball,
        boundary_drift: drift,
        max_neumann_iterations: tracker.max_iters,
        max_contraction: tracker.max_contraction,
        newton_iterations,
        residual_rk,
        residuals,
        eps,
        eps_star,
    })
}

/// `eps*_k = g_k^2 eps^Q_k`.
pub fn eps_star_from_table(table: &CoefficientTable, g: &[f64]) -> Vec<f64> {
    (0..table.big_n()).map(|k| g[k] * g[k] * table.row(k).eps_q).collect()
}

/// `eps_0 .. eps_N` with `eps_{k+1} = L^2 (eps_k + eps*_k)` and `eps_N = 0`.
///
/// Evaluated as `eps_k = -sum_{j >= k} L^{-2(j-k)} eps*_j`, which at `k = 0`
/// is the usual choice of `eps_0` and avoids the `L^{2N}` growth of forward
/// substitution.
pub fn epsilon_solve(eps_star: &[f64], l: f64) -> Vec<f64> {
    let n = eps_star.len();
    let mut eps = vec![0.0; n + 1];
    for k in (0..n).rev() {
        eps[k] = eps[k + 1] / (l * l) - eps_star[k];
    }
    eps
}

/// Forward substitution from `eps_0`: returns `|eps_N| / (L^{2N} sum_j L^{-2j} |eps*_j|)`
/// and the max relative step residual of the stored sequence.
pub fn epsilon_check(eps: &[f64], eps_star: &[f64], l: f64) -> (f64, f64) {
    let n = eps_star.len();
    let l2 = l * l;
    let mut e = eps[0];
    for s in eps_star {
        e = l2 * (e + s);
    }
    let scale: f64 = eps_star.iter().enumerate().map(|(j, s)| l2.powi(-(j as i32)) * s.abs()).sum::<f64>() * l2.powi(n as i32);
    let end = if scale > 0.0 { e.abs() / scale } else { e.abs() };
    let step = (0..n)
        .map(|k| {
            let pred = l2 * (eps[k] + eps_star[k]);
            let sc = l2 * (eps[k].abs() + eps_star[k].abs());
            if sc > 0.0 {
                (eps[k + 1] - pred).abs() / sc
            } else {
                (eps[k + 1] - pred).abs()
            }
        })
        .fold(0.0, f64::max);
    (end, step)
}

#[derive(Serialize)]
struct SolutionRecord {
    k: usize,
    e: f64,
    g: f64,
    z: f64,
    p: f64,
    v: f64,
    eps: f64,
}

pub fn write_solution_csv(path: &Path, rep: &SolveReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (k, x) in rep.x.0.iter().enumerate() {
        w.serialize(SolutionRecord { k, e: x[E], g: x[G], z: x[Z], p: x[P], v: x[V], eps: rep.eps[k] })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> CoefficientTable {
        let mut t = CoefficientTable::constant(32, 0.44, 0.43, -0.21, 0.14, -0.28);
        for (k, r) in t.rows.iter_mut().enumerate() {
            r.eps_q = 0.02 * (k as f64 + 1.0);
        }
        t
    }

    #[test]
    fn zero_model_returns_reference() {
        let t = table();
        let m = default_models()[0];
        let rep = continuation_solve(&t, &m, &SolveParams { steps_t: 4, ..Default::default() }).unwrap();
        assert_eq!(rep.x_rk, rep.xbar);
        assert!(rep.residuals.max_recursion() < 1e-16);
    }

    #[test]
    fn saturating_bounds_hold_by_construction() {
        use rand::{Rng, SeedableRng};
        let m = default_models()[1];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let g: f64 = rng.random_range(1e-4..0.1);
            let x = [rng.random_range(0.0..g.powi(3)), g, 0.0, 0.0, 0.0];
            let k = rng.random_range(0..64);
            let r = m.rho(k, &x);
            let h4 = m.h.powi(-4) * m.c_e * g.powi(3);
            assert!(r[0].abs() <= h4 && r[2].abs() <= h4 && r[3].abs() <= h4);
            assert!(r[1].abs() <= m.h.powi(-2) * m.c_e * g.powi(3));
        }
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        for m in default_models() {
            let x = [3e-7, 0.012, 0.001, 2e-5, -1e-5];
            let d = m.drho(5, &x);
            let de = m.de_plus(5, &x);
            for c in 0..5 {
                let h = 1e-7 * x[c].abs().max(1e-9);
                let (mut xp, mut xm) = (x, x);
                xp[c] += h;
                xm[c] -= h;
                let (rp, rm) = (m.rho(5, &xp), m.rho(5, &xm));
                for a in 0..4 {
                    let fd = (rp[a] - rm[a]) / (2.0 * h);
                    assert!((fd - d[a][c]).abs() <= 1e-6 * d[a][c].abs().max(1e-12));
                }
                let fd = (m.e_plus(5, &xp) - m.e_plus(5, &xm)) / (2.0 * h);
                assert!((fd - de[c]).abs() <= 1e-6 * de[c].abs().max(1e-12));
            }
        }
    }

    #[test]
    fn eps_single_source() {
        let eps = epsilon_solve(&[0.7, 0.0, 0.0], 2.0);
        assert_eq!(eps, vec![-0.7, 0.0, 0.0, 0.0]);
        assert!(epsilon_solve(&[0.0; 5], 2.0).iter().all(|&e| e == 0.0));
    }

    #[test]
    fn eps_back_solve_closes() {
        let s: Vec<f64> = (0..32).map(|k| 1e-4 * (k as f64 + 1.0).sqrt()).collect();
        let eps = epsilon_solve(&s, 2.0);
        assert_eq!(eps[32], 0.0);
        let (end, step) = epsilon_check(&eps, &s, 2.0);
        assert!(end < 1e-10 && step < 1e-12, "{end} {step}");
    }

    #[test]
    fn saturating_solve_satisfies_flow() {
        let t = table();
        let m = default_models()[1];
        let rep = continuation_solve(&t, &m, &SolveParams { steps_t: 16, ..Default::default() }).unwrap();
        assert!(rep.max_ball_ratio < 1.0);
        assert!(rep.residuals.passed(1e-8), "{:?}", rep.residuals);
        assert_eq!(rep.boundary_drift, 0.0);
    }
}
