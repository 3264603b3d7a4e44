//! Prints one PASS/FAIL line per criterion followed by the measured
//! quantities, and exits nonzero when any criterion fails. Set
//! `ACCEPTANCE_ONLY=1,3` to run a subset.

use std::process::ExitCode;
use std::time::Instant;

use lrex_validation::CRITERIA;

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, run)) in CRITERIA.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {id}: {name} ({:.1} s)", start.elapsed().as_secs_f64());
        for d in &outcome.details {
            println!("        {d}");
        }
        failed += usize::from(!outcome.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
