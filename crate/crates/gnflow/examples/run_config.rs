// Run configuration with overrides, its content hash, and the acceptance checks it drives.

use gnflow::config::RunConfig;
use gnflow::error::Result;
use gnflow::verify::Verifier;

pub fn run() -> Result<()> {
    let cfg = RunConfig::from_str_kv("N = 8\ng_f = 0.01\n# comment\n")?.with_overrides(&["seed=3"])?;
    println!("{}", cfg.to_kv());
    println!("hash {}", cfg.hash());
    if let Err(e) = RunConfig::default().with_overrides(&["L=1"]) {
        println!("rejected: {e}");
    }
    let mut v = Verifier::new(cfg);
    for id in [1, 7, 9, 10] {
        let c = v.run(id);
        println!("{}", c.line());
        assert!(c.passed);
    }
    Ok(())
}

fn main() -> Result<()> {
    run()
}
