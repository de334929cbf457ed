use hodep_core::verify::{self, SuiteReport};

use crate::args::{SuiteArg, VerifyArgs};

/// Runs the requested suites and prints one row per suite. Returns true
/// iff everything passed.
pub fn run(args: &VerifyArgs) -> bool {
    let scale = args.seeds.max(1);
    let reports: Vec<SuiteReport> = match args.suite {
        SuiteArg::All => verify::all_suites(scale),
        SuiteArg::Admm => vec![verify::admm_suite(100 * scale)],
        SuiteArg::Slave => vec![verify::slave_suite(1000 * scale)],
        SuiteArg::Lbp => vec![verify::lbp_suite(50 * scale)],
        SuiteArg::Logz => vec![verify::logz_suite(10 * scale)],
        SuiteArg::Gradient => vec![verify::gradient_suite(3 * scale)],
        SuiteArg::Mst => vec![verify::mst_suite(200 * scale)],
    };
    println!("{:<10} {:>7} {:>9}  {:<6} detail", "suite", "cases", "failures", "status");
    let mut all_passed = true;
    for r in &reports {
        println!(
            "{:<10} {:>7} {:>9}  {:<6} {}",
            r.name,
            r.cases,
            r.failures,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
        all_passed &= r.passed;
    }
    all_passed
}
