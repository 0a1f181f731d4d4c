use fastnn::conv::{ConvMode, ConvShape, Dispatcher};
use fastnn_bench::calibrate::time_backend;
use fastnn_bench::{calibrate_heuristics, default_grid, CalibrateOptions};

use crate::Outcome;

const REPS: usize = 5;

pub fn criterion() -> Outcome {
    let grid = default_grid();
    let cal = match calibrate_heuristics(&grid, CalibrateOptions { reps: REPS, gemm: true }) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("calibration.txt");
    cal.write(&path).unwrap();
    let loaded = match Dispatcher::load(&path) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("written table does not load: {e}")),
    };

    // Against the calibration's own measurements.
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for shape in cal.shapes() {
        for mode in [ConvMode::Valid, ConvMode::Full] {
            let (best, best_s) = cal.best(&shape, mode).unwrap();
            let picked = loaded.select(mode, &shape);
            let ratio = cal.seconds(&shape, picked).unwrap() / best_s;
            worst = worst.max(ratio);
            if ratio > 1.10 {
                failures.push(format!("{shape:?} {}: {picked} vs {best} x{ratio:.2}", mode.as_str()));
            }
        }
    }

    // Fresh timings on the first MNIST layer.
    let s = ConvShape::new(16, 1, 8, (5, 5), (28, 28));
    let time = |b| time_backend(&s, b, REPS).unwrap();
    let picked = loaded.select(ConvMode::Valid, &s);
    let fresh: Vec<_> = fastnn::conv::ConvBackend::for_mode(ConvMode::Valid)
        .iter()
        .map(|&b| (b, time(b)))
        .collect();
    let best = fresh.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    let picked_s = fresh.iter().find(|t| t.0 == picked).unwrap().1;
    let remeasured = picked_s / best;
    let im2col_wins = fresh.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0
        == fastnn::conv::ConvBackend::Im2colGemm;
    if remeasured >= 2.0 {
        failures.push(format!("5x5 on 28x28 re-measured: {picked} at x{remeasured:.2}"));
    }
    let detail = format!(
        "{} shapes x 2 modes, worst dispatched/best x{worst:.3} (<= 1.10); 5x5 on 28x28 re-measured \
         x{remeasured:.2} (< 2), im2col {} direct there{}",
        grid.len(),
        if im2col_wins { "beats" } else { "does not beat" },
        if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
    );
    Outcome::check(failures.is_empty(), detail)
}
