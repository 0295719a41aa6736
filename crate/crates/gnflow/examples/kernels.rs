// Covariance kernels on a torus: point values, the Poisson dual of the heat kernel, decay fits.

use gnflow::error::Result;
use gnflow::kernels::{decay_report, eval_kernel, heat_kernel_dual, KernelKind, SampleGrid, TorusSpec};

pub fn run() -> Result<()> {
    let spec = TorusSpec::new(2, 2, 2)?;
    for kind in [KernelKind::G { k: 0 }, KernelKind::C { k: 0 }, KernelKind::W { k: 3 }] {
        let m = eval_kernel(&kind, [0.5, 0.25], &spec, 1e-15)?;
        println!("{:>2}(0.5, 0.25) = [[{:.6}, {:.6}], [{:.6}, {:.6}]]", kind.tag(), m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    }
    let d = heat_kernel_dual([0.3, -0.7], 0.25, &spec, 1e-18)?;
    println!("heat kernel: fourier {:.15} image {:.15}", d.fourier_value, d.image_value);
    assert!(d.difference() < 1e-10);
    let grid = SampleGrid { points_per_side: 8 };
    for k in 1..=3 {
        let fit = decay_report(&KernelKind::W { k }, &spec, &grid, 1e-15)?;
        println!("{}: K = {:.4}", fit.bound, fit.k_fit);
    }
    Ok(())
}

fn main() -> Result<()> {
    run()
}
