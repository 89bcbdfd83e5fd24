//! Runs every acceptance suite and prints one line per check and one verdict per criterion.
//! Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;

use fracvirial::suite::{run_suite, SuiteName};

fn main() -> ExitCode {
    // criterion -> (checks, failures)
    let mut tally: BTreeMap<u8, (usize, usize)> = (1..=9).map(|c| (c, (0, 0))).collect();
    let mut errors = vec![];
    for name in SuiteName::ALL {
        match run_suite(name) {
            Ok(report) => {
                println!("suite {name}: {:.1} s", report.runtime_s);
                for c in &report.checks {
                    println!("  {c}");
                    let t = tally.entry(c.criterion).or_default();
                    t.0 += 1;
                    t.1 += usize::from(!c.passed);
                }
            }
            Err(e) => {
                println!("suite {name}: error {e}");
                errors.push(name);
            }
        }
    }
    let mut ok = errors.is_empty();
    println!();
    for (criterion, (checks, failures)) in &tally {
        let pass = *checks > 0 && *failures == 0;
        ok &= pass;
        println!("criterion {criterion}: {} ({checks} checks, {failures} failed)", if pass { "PASS" } else { "FAIL" });
    }
    if !errors.is_empty() {
        println!("suites that errored: {errors:?}");
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
