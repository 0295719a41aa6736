// Continuation from the quadratic flow to the full flow for each perturbation model.

use gnflow::coeffs::CoefficientTable;
use gnflow::error::Result;
use gnflow::linear::{G, Z};
use gnflow::stability::{continuation_solve, default_models, SolveParams};

pub fn run() -> Result<()> {
    let mut table = CoefficientTable::constant(16, 0.44, 0.43, -0.21, 0.14, -0.28);
    for r in table.rows.iter_mut() {
        r.eps_q = 0.01;
    }
    let params = SolveParams { steps_t: 16, ..Default::default() };
    for model in default_models() {
        let rep = continuation_solve(&table, &model, &params)?;
        let x0 = rep.x.0[0];
        println!(
            "{:>8}: residual {:.1e}, g_0 = {:.6e}, z_N = {:.3e}, eps_0 = {:.3e}, Neumann iterations {}",
            model.kind.tag(),
            rep.residuals.max_recursion(),
            x0[G],
            rep.x.0[16][Z],
            rep.eps[0],
            rep.max_neumann_iterations
        );
        assert!(rep.residuals.passed(1e-8));
    }
    Ok(())
}

fn main() -> Result<()> {
    run()
}
