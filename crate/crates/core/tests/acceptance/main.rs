//! Acceptance criteria 2–10. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero on any failure.

mod accounting;
mod determinism;
mod gradients;
mod learnability;
mod metric_oracles;
mod pca;
mod scalability;
mod selection;
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(u8, &str, Check); 9] = [
        (2, "feature-selection oracle equivalence", selection::oracle_equivalence),
        (3, "planted-signal recovery", selection::planted_signal_recovery),
        (4, "rolling PCA variance, reconstruction and no-lookahead", pca::rolling_pca_properties),
        (5, "Q-network gradient correctness", gradients::finite_differences),
        (6, "learnability smoke test", learnability::alternating_fixture),
        (7, "accounting identities", accounting::identities),
        (8, "metric oracles", metric_oracles::random_curves_and_examples),
        (9, "scalability protocol", scalability::plug_and_unplug),
        (10, "pipeline determinism", determinism::two_identical_runs),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();

    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .filter(|(n, name, _)| {
                filter.is_empty() || filter.iter().any(|f| name.contains(f.as_str()) || f == &n.to_string())
            })
            .map(|&(n, name, check)| {
                s.spawn(move || {
                    let start = Instant::now();
                    let outcome = match catch_unwind(AssertUnwindSafe(check)) {
                        Ok(r) => r,
                        Err(p) => Err(p
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "panicked".into())),
                    };
                    (n, name, outcome, start.elapsed())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("criterion thread")).collect()
    });

    let mut failed = 0;
    for (n, name, outcome, elapsed) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name} ({detail}; {:.1}s)", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why} ({:.1}s)", elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
