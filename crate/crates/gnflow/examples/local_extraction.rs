// Local-part extraction from a Grassmann family, and reblocking with field rescaling.

use gnflow::error::Result;
use gnflow::grassmann::Element;
use gnflow::polymer::{
    extract_local, one_block_quartic_check, quartic_family, random_family, reblock_contraction, reblock_rescale, BlockTorus,
    FieldLayout, GammaParams, GrassmannFamily, PavedSet,
};

pub fn run() -> Result<()> {
    let layout = FieldLayout::new(BlockTorus::new([5, 5])?, 2, 2)?;
    let q = extract_local(&quartic_family(layout, "g", 0.2)?)?.coefficients.quartic.expect("n = 2");
    println!("quartic g = 0.2 recovered as g* = {:.6}, p* = {:.1e}, v* = {:.1e}", q.g_star, q.p_star, q.v_star);

    let fam = random_family(layout, 2, 6, 0.1, 11)?;
    let ex = extract_local(&fam)?;
    let c = ex.coefficients;
    println!("random family: eps^E = {:.4e}, m* = {:.3e}, z* = {:.3e}", c.eps_e, c.m_star, c.z_star);
    println!("remainder moments {:.1e} on {} small sets", ex.normalization_residual, ex.small_sets);
    assert!(ex.normalization_residual < 1e-10);

    let coarse_layout = FieldLayout::new(BlockTorus::new([4, 4])?, 1, 1)?;
    let mut one = GrassmannFamily::new(coarse_layout);
    one.insert(PavedSet::single(&coarse_layout.torus, [3, 2])?, Element::scalar(num_complex::Complex64::new(0.7, 0.0)))?;
    let moved = reblock_rescale(&one, 2)?;
    for (y, e) in &moved.members {
        println!("constant on block (3,2) reblocks to {:?} with value {}", y.blocks(), e.scalar_part());
    }
    let deg6 = gnflow::polymer::homogeneous_family(FieldLayout::new(BlockTorus::new([4, 4])?, 2, 1)?, 3, 4, 2)?;
    println!("degree-6 kernels contract by {:.4} under L = 2", reblock_contraction(&deg6, 2, 1.0)?.ratio);
    let quartic = one_block_quartic_check(1.0, &GammaParams::default())?;
    println!("one-block quartic norm {:.1} against A h^4 / 4 = {:.1} (overcount {})", quartic.norm, quartic.reference, quartic.overcount);
    Ok(())
}

fn main() -> Result<()> {
    run()
}
