//! Runs the twelve acceptance criteria at their stated sizes and prints one
//! PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

use std::io::Write;

use duffing_core::checks::{run, Mode, CRITERIA};

fn main() {
    let mut failed = Vec::new();
    let mut out = std::io::stdout();
    for id in 1..=CRITERIA {
        let report = run(id, Mode::Full);
        let _ = writeln!(out, "{report}");
        let _ = out.flush();
        if !report.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {CRITERIA} criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
