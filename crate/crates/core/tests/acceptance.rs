//! Acceptance battery; prints one line per criterion and fails on any miss.
//!
//! `PARISI_SUITE_FILTER` restricts the run, `PARISI_SUITE_OUT` keeps the reports.

use parisi_core::suite::{run_suite, SuiteOptions};

fn main() {
    let opts = SuiteOptions {
        filter: std::env::var("PARISI_SUITE_FILTER").ok().filter(|s| !s.is_empty()),
        out: std::env::var_os("PARISI_SUITE_OUT").map(Into::into),
        ..SuiteOptions::default()
    };
    println!("acceptance suite (seed {})", opts.seed);
    match run_suite(&opts, &mut std::io::stdout()) {
        Ok(s) if s.all_passed() => {}
        Ok(_) => std::process::exit(1),
        Err(e) => {
            eprintln!("suite error: {e}");
            std::process::exit(1);
        }
    }
}
