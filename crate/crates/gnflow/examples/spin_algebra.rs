// Gamma matrices, Pin lifts of the lattice symmetries, and the quartic invariant decomposition.

use gnflow::error::Result;
use gnflow::spin::{gamma_basis, identity_report, invariant_decompose, kron, lattice_symmetries, pin_element};

pub fn run() -> Result<()> {
    for c in identity_report(1e-12, 7) {
        println!("[{}] {}", if c.passed { "ok" } else { "FAIL" }, c.name);
        assert!(c.passed);
    }
    for s in lattice_symmetries() {
        let lift = pin_element(&s)?;
        println!("R = {:?} lifts to {:.3}", s.r, lift);
    }
    let b = gamma_basis();
    let op = kron(&b.identity(), &b.identity()) * num_complex::Complex64::new(0.3, 0.0)
        + kron(&b.gamma5(), &b.gamma5()) * num_complex::Complex64::new(-0.1, 0.0);
    let d = invariant_decompose(&op);
    println!("g* = {:.3}, p* = {:.3}, v* = {:.3}", d.g_star, d.p_star, d.v_star);
    assert!((d.g_star - 0.3).abs() < 1e-12 && (d.p_star + 0.1).abs() < 1e-12);
    Ok(())
}

fn main() -> Result<()> {
    run()
}
