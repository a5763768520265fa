//! Acceptance criteria, run one at a time so their wall-clock figures are
//! meaningful. Prints one PASS/FAIL line per criterion and exits non-zero if
//! any fails. `NONCONV_SCALE=quick` runs the reduced variants; a numeric
//! argument restricts the run to those criteria (`cargo test --test acceptance -- 4 5`).

use std::process::ExitCode;

use nonconv_core::verify::{criterion, Scale};

fn main() -> ExitCode {
    let scale = match std::env::var("NONCONV_SCALE").as_deref() {
        Ok("quick") => Scale::Quick,
        _ => Scale::Full,
    };
    let picked: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids: Vec<u8> = if picked.is_empty() { (1..=10).collect() } else { picked };
    println!("\nacceptance criteria ({scale:?} scale)");
    let mut failed = Vec::new();
    for id in ids {
        match criterion(id, scale) {
            Ok(r) => {
                println!("{}", r.line());
                if !r.pass() {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("C{id:<2} FAIL error: {e}");
                failed.push(id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        ExitCode::FAILURE
    }
}
