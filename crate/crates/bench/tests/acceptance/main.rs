//! Acceptance suite: one line per criterion, nonzero exit on any failure.
//!
//! Criteria that need MNIST or CIFAR-10 report SKIP when the cache has no
//! data; everything that can run without the datasets still runs.

mod conv;
mod data_runs;
mod energy;
mod formats;
mod grads;
mod optim;
mod speed;

use std::time::Instant;

pub enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

impl Outcome {
    pub fn check(ok: bool, detail: String) -> Outcome {
        if ok {
            Outcome::Pass(detail)
        } else {
            Outcome::Fail(detail)
        }
    }
}

/// max |a - b| / max |reference|
pub fn rel_err(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len(), "length mismatch");
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
    got.iter()
        .zip(want)
        .map(|(&g, &w)| (g as f64 - w).abs())
        .fold(0.0, f64::max)
        / scale
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "backend equivalence", conv::criterion),
        (2, "gradient checks", grads::criterion),
        (3, "MNIST dense smoke test", data_runs::mnist_dense),
        (4, "MNIST CNN smoke test", data_runs::mnist_cnn),
        (5, "CIFAR-10 CNN smoke test", data_runs::cifar_cnn),
        (6, "dispatch relative speed", speed::criterion),
        (7, "RBM suite", energy::criterion),
        (8, "optimizer traces", optim::criterion),
        (9, "formats", formats::criterion),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run)
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::Fail(format!("panicked: {msg}"))
            });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {n} ({name}): {tag} [{secs:.1}s] {detail}");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
