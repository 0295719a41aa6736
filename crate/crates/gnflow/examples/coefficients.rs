// The per-step flow coefficients beta, beta', theta, theta^p, theta^v, eps^Q.

use gnflow::coeffs::{coefficient_table, CoeffSpec, QuadratureSpec};
use gnflow::error::Result;

pub fn run() -> Result<()> {
    let table = coefficient_table(6, &CoeffSpec { j_cap: 3, ..Default::default() }, &QuadratureSpec::default())?;
    println!("{:>2} {:>12} {:>12} {:>12} {:>12} {:>12}", "k", "beta", "beta'", "theta", "theta_p", "theta_v");
    for r in &table.rows {
        println!("{:>2} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}", r.k, r.beta, r.beta_prime, r.theta, r.theta_p, r.theta_v);
    }
    let f = table.fitted;
    println!("C- = {:.4e}, C+ = {:.4}, C_theta = {:.4}", f.c_minus, f.c_plus, f.c_theta);
    assert!(table.rows.iter().all(|r| r.beta > 0.0));
    Ok(())
}

fn main() -> Result<()> {
    run()
}
