// Paved sets, the tree weight Theta, and the polymer weights Gamma and Gamma_n.

use gnflow::error::Result;
use gnflow::polymer::{submultiplicativity_check, small_set, theta_exhaustive, theta_gamma, BlockTorus, GammaParams, PavedSet};

pub fn run() -> Result<()> {
    let t = BlockTorus::new([6, 6])?;
    let params = GammaParams::default();
    for s in ["0,0", "0,0; 1,0", "0,0; 1,0; 1,1", "0,0; 3,0", "0,0; 1,1", "0,0; 1,0; 2,0; 3,0; 4,0"] {
        let x = PavedSet::parse(&t, s)?;
        let w = theta_gamma(&x, &t, &params, 4);
        let oracle = theta_exhaustive(&x, &t, &params.theta)?;
        println!("{s:<24} small {:<5} Theta {:>4} (trees {:>4}) Gamma {:.3e} Gamma_4 {:.3e}", small_set(&x, &t), w.theta, oracle, w.gamma, w.gamma_n);
        assert_eq!(w.theta, oracle);
    }
    let f = submultiplicativity_check(&t, &params, 200, 4, 1);
    println!("Gamma(X u Y) / (Gamma(X) Gamma(Y) theta(d)) <= {:.4} over {} pairs", f.max_ratio, f.pairs);
    assert!(f.holds());
    Ok(())
}

fn main() -> Result<()> {
    run()
}
