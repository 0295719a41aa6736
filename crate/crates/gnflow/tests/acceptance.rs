//! Acceptance suite at the default configuration: one line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use gnflow::config::RunConfig;
use gnflow::verify::Verifier;

fn main() -> ExitCode {
    let start = Instant::now();
    let mut v = Verifier::new(RunConfig::default());
    let mut failed = 0;
    for id in 1..=10 {
        let t = Instant::now();
        let c = v.run(id);
        println!("{}  [{:.1?}]", c.line(), t.elapsed());
        if !c.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} of 10 criteria passed in {:.1?}", 10 - failed, start.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
