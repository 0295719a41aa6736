// The structured solution operator S0 of the linearized flow against a dense solve.

use gnflow::coeffs::CoefficientTable;
use gnflow::error::Result;
use gnflow::linear::{s0_report, LinearContext};
use gnflow::quadratic::trajectory;

pub fn run() -> Result<()> {
    for n in [8, 16, 32] {
        let table = CoefficientTable::constant(n, 0.44, 0.43, -0.21, 0.14, -0.28);
        let traj = trajectory(0.01, &table)?;
        let ctx = LinearContext::new(&table, &traj.gbar, &traj.zbar, None)?;
        let rep = s0_report(&ctx, 20, 1)?;
        println!("N = {n:>2}: |S0| ~ {:.4}, dense difference {:.1e}", rep.s0_norm_estimate, rep.oracle_difference);
        assert!(rep.oracle_difference < 1e-10);
    }
    Ok(())
}

fn main() -> Result<()> {
    run()
}
