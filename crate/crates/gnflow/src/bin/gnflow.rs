use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use gnflow::coeffs::{coefficient_table, CoefficientTable};
use gnflow::config::{parse_dims, Artifact, RunConfig};
use gnflow::error::{Error, Result};
use gnflow::grassmann::{
h_final, partition_function_z, FinalCouplings};
use gnflow::kernels::{
    decay_report, eval_kernel, heat_kernel_dual, momentum_lattice, KernelKind, SampleGrid, TorusSpec,
};
use gnflow::linear::{s0_report, sw_norm_estimate, w_build, LinearContext, G, P, V, Z};
use gnflow::polymer::{
    extract_local, mayer_cluster_log, random_activities, random_family, theta_gamma, BlockTorus, FieldLayout,
    GammaParams, PavedSet,
};
use gnflow::quadratic::{sandwich_check, round_trip_residual, sum_bounds_check, trajectory, write_trajectory_csv};
use gnflow::spin::identity_report;
use gnflow::stability::{continuation_solve, ebar, write_solution_csv, ModelKind, PerturbationModel};
use gnflow::verify::{Verifier, CRITERIA};

#[derive(Parser)]
#[command(name = "gnflow", version, about = "RG flow engine for the massless Gross-Neveu model on a torus")]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, or a file path for the primary artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the JSON artifact instead of a summary.
    #[arg(long, global = true)]
    json: bool,
    /// Configuration override `key=value`, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Model parameters shared by the flow commands.
#[derive(Args, Clone, Default)]
struct Physics {
    #[arg(long = "L")]
    l: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long = "N")]
    big_n: Option<u32>,
    #[arg(long = "M")]
    m: Option<u32>,
    #[arg(long)]
    gf: Option<f64>,
    /// Reuse a coefficient table CSV.
    #[arg(long)]
    table: Option<PathBuf>,
}

impl Physics {
    fn overrides(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(x) = self.l {
            v.push(format!("L={x}"));
        }
        if let Some(x) = self.n {
            v.push(format!("n={x}"));
        }
        if let Some(x) = self.big_n {
            v.push(format!("N={x}"));
        }
        if let Some(x) = self.m {
            v.push(format!("M={x}"));
        }
        if let Some(x) = self.gf {
            v.push(format!("g_f={x}"));
        }
        if let Some(x) = &self.table {
            v.push(format!("table={}", x.display()));
        }
        v
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate a covariance kernel at a point.
    Kernels {
        #[command(subcommand)]
        action: Option<KernelsAction>,
        #[command(flatten)]
        eval: KernelArgs,
    },
    /// Gamma-matrix identity suite.
    Spin {
        #[command(subcommand)]
        action: Option<SpinAction>,
    },
    /// Coefficient table for k = 0..N-1.
    Coeffs {
        #[command(flatten)]
        physics: Physics,
        /// Quadrature cells per unit length.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Quadratic flow.
    Flow {
        #[command(subcommand)]
        action: FlowAction,
    },
    /// Linear solution operators.
    Linear {
        #[command(subcommand)]
        action: LinearAction,
    },
    /// Continuation solve of the full flow.
    Solve {
        #[command(flatten)]
        physics: Physics,
        /// zero, sat or ecoupled; all three when omitted.
        #[arg(long)]
        model: Option<String>,
        #[arg(long = "steps-t")]
        steps_t: Option<usize>,
    },
    /// Grassmann integration and the final partition function.
    Grassmann {
        #[command(subcommand)]
        action: GrassmannAction,
    },
    /// Paved sets, tree weights, extraction and Mayer logarithms.
    Polymer {
        #[command(subcommand)]
        action: PolymerAction,
    },
    /// Acceptance checks: `all` or criterion numbers.
    Verify {
        #[arg(default_value = "all")]
        which: Vec<String>,
    },
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long = "L")]
    l: Option<u32>,
    #[arg(long, default_value_t = 2)]
    j: u32,
    #[arg(long, default_value_t = 0)]
    k: u32,
    /// G, C, Gz, Cz, w or wprime.
    #[arg(long, default_value = "C")]
    kind: String,
    #[arg(long, default_value_t = 0.0)]
    z: f64,
    #[arg(long, default_value = "0.5,0.25")]
    x: String,
    #[arg(long, default_value_t = 1e-15)]
    tol: f64,
}

#[derive(Subcommand)]
enum KernelsAction {
    /// Fitted decay constants for C_k and w_k, k = 0..k_max (CSV).
    Decay {
        #[arg(long, default_value_t = 6)]
        k_max: u32,
        #[arg(long, default_value_t = 16)]
        points: usize,
    },
    /// Both sides of the heat-kernel Poisson identity.
    Dual {
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
}

#[derive(Subcommand)]
enum SpinAction {
    Check,
}

#[derive(Subcommand)]
enum FlowAction {
    Quad {
        #[command(flatten)]
        physics: Physics,
    },
}

#[derive(Subcommand)]
enum LinearAction {
    Check {
        #[command(flatten)]
        physics: Physics,
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Subcommand)]
enum GrassmannAction {
    /// Partition function on the unit torus with the solved final couplings.
    Z {
        #[command(flatten)]
        physics: Physics,
        /// Grid `MxN` on the unit torus.
        #[arg(long)]
        grid: Option<String>,
        /// sat, ecoupled or zero model for the couplings.
        #[arg(long, default_value = "sat")]
        model: String,
    },
    /// Wick, characteristic-function and field-strength identities.
    Verify,
}

#[derive(Subcommand)]
enum PolymerAction {
    /// Mayer logarithm of random scalar activities.
    Mayer {
        #[arg(long)]
        blocks: Option<String>,
    },
    /// Theta, Gamma and Gamma_n of a paved set `"x,y; x,y"` on the block torus.
    Gamma {
        #[arg(long = "X")]
        x: String,
        #[arg(long, default_value = "6x6")]
        torus: String,
        #[arg(long = "L")]
        l: Option<u32>,
        #[arg(long, default_value_t = 4)]
        gamma_n: u32,
    },
    /// Local-part extraction from a random family.
    Extract {
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
}

fn out_path(cfg: &RunConfig, default: &str) -> PathBuf {
    if cfg.out.extension().is_some() {
        cfg.out.clone()
    } else {
        cfg.out.join(default)
    }
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d)?;
    }
    Ok(())
}

/// Reads `cfg.table` when given, otherwise computes the table and writes it next to the artifacts.
fn load_table(cfg: &RunConfig) -> Result<CoefficientTable> {
    if let Some(p) = &cfg.table {
        let t = CoefficientTable::read_csv(p, cfg.coeff_spec())?;
        if t.big_n() != cfg.big_n as usize {
            return Err(Error::Config {
                field: "table".into(),
                message: format!("{} has {} rows but N = {}", p.display(), t.big_n(), cfg.big_n),
            });
        }
        return Ok(t);
    }
    let t = coefficient_table(cfg.big_n, &cfg.coeff_spec(), &cfg.quadrature())?;
    let dir = if cfg.out.extension().is_some() { cfg.out.parent().map(Path::to_path_buf).unwrap_or_default() } else { cfg.out.clone() };
    let p = dir.join("coeffs.csv");
    ensure_parent(&p)?;
    t.write_csv(&p)?;
    Ok(t)
}

struct Output {
    passed: bool,
    lines: Vec<String>,
}

fn emit<T: Serialize>(cfg: &RunConfig, json: bool, command: &str, path: &Path, passed: bool, result: T, lines: Vec<String>) -> Result<Output> {
    let art = Artifact::new(command, cfg, passed, result);
    art.write_json(path)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&art)?);
        Ok(Output { passed, lines: vec![] })
    } else {
        let mut lines = lines;
        lines.push(format!("wrote {} (config {})", path.display(), &art.config_hash[..12]));
        Ok(Output { passed, lines })
    }
}

fn models(cfg: &RunConfig, which: Option<&str>) -> Result<Vec<PerturbationModel>> {
    let kinds = match which {
        Some(s) => vec![ModelKind::parse(s)?],
        None => vec![ModelKind::Zero, ModelKind::Saturating, ModelKind::ECoupled],
    };
    kinds.into_iter().map(|k| PerturbationModel::new(k, cfg.c_e, cfg.h, cfg.kappa)).collect()
}

fn run(cli: Cli) -> Result<Output> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let mut overrides = cli.set.clone();
    if let Some(o) = &cli.out {
        overrides.push(format!("out={}", o.display()));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let physics = match &cli.cmd {
        Cmd::Coeffs { physics, .. }
        | Cmd::Flow { action: FlowAction::Quad { physics } }
        | Cmd::Linear { action: LinearAction::Check { physics, .. } }
        | Cmd::Solve { physics, .. }
        | Cmd::Grassmann { action: GrassmannAction::Z { physics, .. } } => physics.clone(),
        _ => Physics::default(),
    };
    overrides.extend(physics.overrides());
    match &cli.cmd {
        Cmd::Coeffs { grid: Some(g), .. } => overrides.push(format!("cells_per_unit={g}")),
        Cmd::Solve { steps_t: Some(s), .. } => overrides.push(format!("steps_t={s}")),
        Cmd::Linear { action: LinearAction::Check { samples: Some(s), .. } } => overrides.push(format!("samples={s}")),
        Cmd::Grassmann { action: GrassmannAction::Z { grid: Some(g), .. } } => overrides.push(format!("z_grid={g}")),
        Cmd::Polymer { action: PolymerAction::Mayer { blocks: Some(b) } } => overrides.push(format!("mayer_blocks={b}")),
        _ => {}
    }
    cfg = cfg.with_overrides(&overrides)?;
    let json = cli.json;

    match cli.cmd {
        Cmd::Kernels { action: None, eval } => {
            let l = eval.l.unwrap_or(cfg.l);
            let spec = TorusSpec::new(l, eval.j, cfg.n.max(2))?;
            let kind = KernelKind::parse(&eval.kind, eval.k, eval.z)?;
            let xs: Vec<f64> = eval
                .x
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad coordinate in {:?}", eval.x))))
                .collect::<Result<_>>()?;
            if xs.len() != 2 {
                return Err(Error::InvalidArgument("--x needs two coordinates".into()));
            }
            let x = [xs[0], xs[1]];
            let m = eval_kernel(&kind, x, &spec, eval.tol)?;
            let s_min = kind.profile(l)?.s_min();
            let radius = momentum_lattice(&spec, eval.tol, s_min).map(|s| s.radius).ok();
            let re: Vec<Vec<f64>> = (0..2).map(|r| (0..2).map(|c| m[(r, c)].re).collect()).collect();
            let im: Vec<Vec<f64>> = (0..2).map(|r| (0..2).map(|c| m[(r, c)].im).collect()).collect();
            let result = json!({"kind": kind, "x": x, "matrix_re": re, "matrix_im": im, "truncation_radius": radius});
            let lines = vec![format!("{} at {x:?}: re {re:?} im {im:?}", kind.tag())];
            emit(&cfg, json, "kernels", &out_path(&cfg, "kernel.json"), true, result, lines)
        }
        Cmd::Kernels { action: Some(KernelsAction::Decay { k_max, points }), eval } => {
            let l = eval.l.unwrap_or(cfg.l);
            let spec = TorusSpec::new(l, eval.j, cfg.n.max(2))?;
            let grid = SampleGrid { points_per_side: points };
            let path = out_path(&cfg, "decay.csv");
            ensure_parent(&path)?;
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["kind", "k", "K_fit"])?;
            let mut fits = Vec::new();
            for k in 0..=k_max {
                for kind in [KernelKind::C { k }, KernelKind::W { k }] {
                    let f = decay_report(&kind, &spec, &grid, eval.tol)?;
                    w.write_record([kind.tag().to_string(), k.to_string(), format!("{:e}", f.k_fit)])?;
                    fits.push(f);
                }
            }
            w.flush()?;
            let lines = fits.iter().map(|f| format!("{:>2} k={} K={:.6}", f.kind.tag(), f.kind.k(), f.k_fit)).collect();
            emit(&cfg, json, "kernels decay", &sidecar(&path, "json"), true, fits, lines)
        }
        Cmd::Kernels { action: Some(KernelsAction::Dual { lambda }), eval } => {
            let spec = TorusSpec::new(eval.l.unwrap_or(cfg.l), eval.j, cfg.n.max(2))?;
            let xs: Vec<f64> = eval.x.split(',').filter_map(|s| s.trim().parse().ok()).collect();
            let x = [xs.first().copied().unwrap_or(0.0), xs.get(1).copied().unwrap_or(0.0)];
            let d = heat_kernel_dual(x, lambda, &spec, 1e-18)?;
            let ok = d.difference() < 1e-10;
            let lines = vec![format!("fourier {:.15e} image {:.15e} diff {:.2e}", d.fourier_value, d.image_value, d.difference())];
            emit(&cfg, json, "kernels dual", &out_path(&cfg, "dual.json"), ok, d, lines)
        }
        Cmd::Spin { .. } => {
            let checks = identity_report(1e-12, cfg.seed);
            let ok = checks.iter().all(|c| c.passed);
            let lines = checks
                .iter()
                .map(|c| format!("[{}] {} (max error {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.max_error))
                .collect();
            emit(&cfg, json, "spin check", &out_path(&cfg, "spin.json"), ok, checks, lines)
        }
        Cmd::Coeffs { .. } => {
            let t = coefficient_table(cfg.big_n, &cfg.coeff_spec(), &cfg.quadrature())?;
            let path = out_path(&cfg, "coeffs.csv");
            ensure_parent(&path)?;
            t.write_csv(&path)?;
            let f = t.fitted;
            let ok = t.rows.iter().all(|r| r.beta > 0.0);
            let lines = vec![
                format!("wrote {} ({} rows)", path.display(), t.big_n()),
                format!("beta in [{:.6e}, {:.6e}], C_theta = {:.6}", f.beta_min, f.beta_max, f.c_theta),
            ];
            emit(&cfg, json, "coeffs", &sidecar(&path, "json"), ok, json!({"fitted": f, "meta": t.meta}), lines)
        }
        Cmd::Flow { .. } => {
            let t = load_table(&cfg)?;
            let traj = trajectory(cfg.g_f, &t)?;
            let sandwich = sandwich_check(&traj, &t);
            let sums = sum_bounds_check(&traj, &t, 1e6);
            let rt = round_trip_residual(&traj.gbar, &t);
            let path = out_path(&cfg, "traj.csv");
            ensure_parent(&path)?;
            write_trajectory_csv(&path, &traj, &sandwich)?;
            let ok = rt < 1e-14 && sandwich.passed() && sums.passed();
            let lines = vec![
                format!("gbar_0 = {:.6e}, gbar_N = {}", traj.gbar[0], cfg.g_f),
                format!("round trip {rt:.1e}, sandwich failures {}", sandwich.failing.len()),
            ];
            let result = json!({"round_trip": rt, "sandwich_failing": sandwich.failing, "sum_bounds": sums});
            emit(&cfg, json, "flow quad", &sidecar(&path, "json"), ok, result, lines)
        }
        Cmd::Linear { .. } => {
            let t = load_table(&cfg)?;
            let traj = trajectory(cfg.g_f, &t)?;
            let ctx = LinearContext::new(&t, &traj.gbar, &traj.zbar, None)?;
            let rep = s0_report(&ctx, cfg.samples, cfg.seed)?;
            let model = PerturbationModel::new(ModelKind::Saturating, cfg.c_e, cfg.h, cfg.kappa)?;
            let eb = ebar(&traj, &model);
            let ctx_e = LinearContext::new(&t, &traj.gbar, &traj.zbar, Some(&eb))?;
            let w = w_build(&ctx_e, &model, 1.0, &ctx_e.xbar, None)?;
            let sw = sw_norm_estimate(&ctx_e, &w, 30, cfg.seed);
            let ok = rep.oracle_difference < 1e-10;
            let lines = vec![format!(
                "|S0| ~ {:.4}, |S0 W| ~ {sw:.3e}, oracle difference {:.1e}, recursion residual {:.1e}",
                rep.s0_norm_estimate, rep.oracle_difference, rep.max_recursion_residual
            )];
            let result = json!({"S0_norm_estimate": rep.s0_norm_estimate, "SW_norm_estimate": sw, "residuals": rep});
            emit(&cfg, json, "linear check", &out_path(&cfg, "linear.json"), ok, result, lines)
        }
        Cmd::Solve { model, .. } => {
            let t = load_table(&cfg)?;
            let base = out_path(&cfg, "solution.csv");
            ensure_parent(&base)?;
            let ms = models(&cfg, model.as_deref())?;
            let single = ms.len() == 1;
            let mut ok = true;
            let mut lines = Vec::new();
            let mut reports = Vec::new();
            for m in &ms {
                let rep = continuation_solve(&t, m, &cfg.solve_params())?;
                let path = if single { base.clone() } else { base.with_file_name(format!("solution_{}.csv", m.kind.tag())) };
                write_solution_csv(&path, &rep)?;
                let pass = rep.residuals.passed(1e-8);
                ok &= pass;
                lines.push(format!(
                    "[{}] {}: residual {:.1e}, g_0 = {:.6e}, Neumann iterations {}, ball ratio {:.3} -> {}",
                    if pass { "PASS" } else { "FAIL" },
                    m.kind.tag(),
                    rep.residuals.max_recursion(),
                    rep.x.0[0][G],
                    rep.max_neumann_iterations,
                    rep.max_ball_ratio,
                    path.display()
                ));
                reports.push(json!({
                    "model": m.kind.tag(), "residuals": rep.residuals, "max_ball_ratio": rep.max_ball_ratio,
                    "boundary_drift": rep.boundary_drift, "max_neumann_iterations": rep.max_neumann_iterations,
                    "max_contraction": rep.max_contraction, "newton_iterations": rep.newton_iterations,
                    "residual_before_newton": rep.residual_rk, "final": rep.x.0.last(),
                }));
            }
            emit(&cfg, json, "solve", &sidecar(&base, "json"), ok, reports, lines)
        }
        Cmd::Grassmann { action: GrassmannAction::Z { model, .. } } => {
            let t = load_table(&cfg)?;
            let m = models(&cfg, Some(&model))?.remove(0);
            let rep = continuation_solve(&t, &m, &cfg.solve_params())?;
            let x = rep.x.0.last().expect("nonempty");
            let c = FinalCouplings { g: x[G], z: x[Z], p: x[P], v: x[V] };
            let z = partition_function_z(&c, parse_dims("z_grid", &cfg.z_grid)?, 1e-18)?;
            let ok = z.in_band() && z.bound_holds();
            let lines = vec![
                format!("couplings g={:.6e} z={:.3e} p={:.3e} v={:.3e}", c.g, c.z, c.p, c.v),
                format!("Z = {:.17}, |Z-1| = {:.3e} <= e^|S|-1 = {:.3e}", z.z, z.z_minus_one.abs(), z.bound),
                format!("omitted: {}", z.omitted),
            ];
            emit(&cfg, json, "grassmann z", &out_path(&cfg, "z.json"), ok, z, lines)
        }
        Cmd::Grassmann { action: GrassmannAction::Verify } => {
            let c = Verifier::new(cfg.clone()).run(7);
            let lines = vec![c.line(), format!("h(G_f) = {:.6}", h_final().h)];
            emit(&cfg, json, "grassmann verify", &out_path(&cfg, "grassmann.json"), c.passed, c, lines)
        }
        Cmd::Polymer { action: PolymerAction::Mayer { .. } } => {
            let torus = BlockTorus::new(parse_dims("mayer_blocks", &cfg.mayer_blocks)?)?;
            let f = random_activities(torus, cfg.mayer_max_size, cfg.mayer_max_activity, cfg.seed)?;
            let (_, _, rep) = mayer_cluster_log(&f, &GammaParams::for_scale(cfg.l))?;
            let ok = rep.identity_error < 1e-10;
            let lines = vec![format!(
                "{} activities, log Xi = {:.12e}, identity error {:.1e}, |E#|/|E| = {:.4e}",
                rep.activities, rep.log_partition, rep.identity_error, rep.ratio
            )];
            emit(&cfg, json, "polymer mayer", &out_path(&cfg, "mayer.json"), ok, rep, lines)
        }
        Cmd::Polymer { action: PolymerAction::Gamma { x, torus, l, gamma_n } } => {
            let t = BlockTorus::new(parse_dims("torus", &torus)?)?;
            let set = PavedSet::parse(&t, &x)?;
            let w = theta_gamma(&set, &t, &GammaParams::for_scale(l.unwrap_or(cfg.l)), gamma_n);
            let lines = vec![format!("Theta = {}, Gamma = {}, Gamma_{} = {:.6e}", w.theta, w.gamma, gamma_n, w.gamma_n)];
            emit(&cfg, json, "polymer gamma", &out_path(&cfg, "gamma.json"), true, w, lines)
        }
        Cmd::Polymer { action: PolymerAction::Extract { n } } => {
            let layout = FieldLayout::new(BlockTorus::new([5, 5])?, 2, n)?;
            let fam = random_family(layout, 2, 8, 0.1, cfg.seed)?;
            let ex = extract_local(&fam)?;
            let ok = ex.normalization_residual < 1e-10;
            let c = ex.coefficients;
            let lines = vec![
                format!("{} small and {} large sets", ex.small_sets, ex.large_sets),
                format!("eps^E = {:.6e}, m* = {:.3e}, z* = {:.3e}", c.eps_e, c.m_star, c.z_star),
                format!("remainder moments {:.1e}", ex.normalization_residual),
            ];
            let result = json!({"coefficients": c, "normalization_residual": ex.normalization_residual});
            emit(&cfg, json, "polymer extract", &out_path(&cfg, "extract.json"), ok, result, lines)
        }
        Cmd::Verify { which } => {
            let ids: Vec<usize> = if which.iter().any(|w| w == "all") {
                (1..=CRITERIA.len()).collect()
            } else {
                which
                    .iter()
                    .map(|w| w.parse().map_err(|_| Error::InvalidArgument(format!("unknown criterion {w:?}"))))
                    .collect::<Result<_>>()?
            };
            let mut v = Verifier::new(cfg.clone());
            let results: Vec<_> = ids.iter().map(|&i| v.run(i)).collect();
            let ok = results.iter().all(|c| c.passed);
            let lines = results.iter().map(|c| c.line()).collect();
            emit(&cfg, json, "verify", &out_path(&cfg, "verify.json"), ok, results, lines)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            for l in out.lines {
                println!("{l}");
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
