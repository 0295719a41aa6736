// The final partition function Z on a small grid of the unit torus.

use gnflow::error::Result;
use gnflow::grassmann::{partition_function_z, FinalCouplings};

pub fn run() -> Result<()> {
    let c = FinalCouplings { g: 0.01, z: 1e-4, p: 1e-6, v: -1e-6 };
    let z = partition_function_z(&c, [3, 1], 1e-18)?;
    println!("Z = {:.17} on {} psi modes (degree {})", z.z, z.psi_modes, z.max_degree);
    println!("|Z - 1| = {:.2e} <= e^|S_f| - 1 = {:.3e}", z.z_minus_one.abs(), z.bound);
    assert!(z.in_band() && z.bound_holds());
    Ok(())
}

fn main() -> Result<()> {
    run()
}
