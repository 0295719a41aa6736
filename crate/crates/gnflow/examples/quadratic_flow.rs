// The explicit quadratic flow gbar, zbar and its sandwich bounds.

use gnflow::coeffs::CoefficientTable;
use gnflow::error::Result;
use gnflow::quadratic::{sandwich_check, round_trip_residual, sum_bounds_check, trajectory};

pub fn run() -> Result<()> {
    let table = CoefficientTable::constant(40, 0.44, 0.43, -0.21, 0.14, -0.28);
    let traj = trajectory(0.01, &table)?;
    println!("gbar_0 = {:.6e}, gbar_N = {:.6e}, zbar_N = {:.3e}", traj.gbar[0], traj.gbar[40], traj.zbar[40]);
    println!("round trip residual {:.1e}", round_trip_residual(&traj.gbar, &table));
    let sandwich = sandwich_check(&traj, &table);
    println!("sandwich holds at every k: {}", sandwich.passed());
    for g in sum_bounds_check(&traj, &table, 1e6).gamma_products {
        println!("gamma = {:.3}: product ratio in [{:.4}, {:.4}]", g.gamma, g.min_ratio, g.max_ratio);
    }
    assert!(sandwich.passed());
    Ok(())
}

fn main() -> Result<()> {
    run()
}
