// Grassmann monomials, Gaussian integration by determinants, and the norm parameter h(C).

use gnflow::error::Result;
use gnflow::grassmann::{
    gaussian_integrate, gram_check, h_of_c, wick_oracle_check, Element, FiniteCovariance, Grid, ModeCovariance,
};
use nalgebra::DMatrix;
use num_complex::Complex64;

pub fn run() -> Result<()> {
    let c = |x: f64| Complex64::new(x, 0.0);
    let f = Element::monomial(&[0, 1], &[0, 1], c(1.0))?.add(&Element::monomial(&[0], &[1], c(0.5))?);
    let cov = ModeCovariance::square(DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.2), c(0.3), c(2.0)]))?;
    println!("int F dmu_C = {:.6}", gaussian_integrate(&f, &cov, None)?.scalar_part());
    let wick = wick_oracle_check(6, 5, 3)?;
    println!("determinant route vs Berezin oracle on 6 modes: {:.1e}", wick.max_difference);
    let grid = Grid::square(4, 4.0)?;
    let fc = FiniteCovariance::single_scale(grid, 2);
    let h = h_of_c(&fc)?;
    let gram = gram_check(&fc, 3, 50, 5)?;
    println!("h(C) = {:.4}, Gram ratio {:.3} (bound holds when <= 1)", h.h, gram.max_ratio);
    assert!(wick.max_difference < 1e-12 && gram.max_ratio <= 1.0 + 1e-12);
    Ok(())
}

fn main() -> Result<()> {
    run()
}
