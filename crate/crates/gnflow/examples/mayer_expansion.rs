// Mayer expansion of random scalar activities and the connected logarithm E#.

use gnflow::error::Result;
use gnflow::polymer::{mayer_cluster_log, mayer_stability, random_activities, BlockTorus, GammaParams};

pub fn run() -> Result<()> {
    let torus = BlockTorus::new([3, 3])?;
    let params = GammaParams::default();
    let f = random_activities(torus, 2, 0.05, 3)?;
    let (_, _, rep) = mayer_cluster_log(&f, &params)?;
    println!(
        "{} activities on {} blocks: log Xi = {:.10}, |exp(sum E#) - Xi| / Xi = {:.1e}",
        rep.activities, rep.blocks, rep.log_partition, rep.identity_error
    );
    let seeds: Vec<u64> = (0..10).collect();
    let s = mayer_stability(torus, 2, 0.05, &seeds, &params)?;
    println!("|E#|_Gamma / |E|_Gamma_4 in [{:.4e}, {:.4e}] over 10 seeds", s.min_ratio, s.max_ratio);
    assert!(s.passed(1e-10, 2.0));
    Ok(())
}

fn main() -> Result<()> {
    run()
}
