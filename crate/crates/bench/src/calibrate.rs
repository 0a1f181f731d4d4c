//! Measures every convolution backend on a grid of shapes and turns the
//! winners into a dispatch table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use fastnn::conv::{conv_full, conv_valid, ConvBackend, ConvMode, ConvShape, DispatchRule, Dispatcher};
use fastnn::kernels::gemm::{sgemm_with_path, GemmFlags, GemmPath, MatRef};
use fastnn::Tensor;

/// Square GEMM extents probed for the small-kernel threshold.
pub const GEMM_SIZES: [usize; 7] = [8, 16, 24, 32, 48, 64, 96];

#[derive(Clone, Copy, Debug)]
pub struct CalibrateOptions {
    /// Timed repetitions per measurement (after one warm-up run).
    pub reps: usize,
    pub gemm: bool,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions { reps: 5, gemm: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub shape: ConvShape,
    pub backend: ConvBackend,
    /// Median wall time of one call, seconds.
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub timings: Vec<Timing>,
    pub dispatcher: Dispatcher,
    /// `(extent, small seconds, blocked seconds)` per probed GEMM size.
    pub gemm: Vec<(usize, f64, f64)>,
}

/// Shapes of the built-in networks' forward passes plus a few neighbours.
pub fn default_grid() -> Vec<ConvShape> {
    let n = 16;
    vec![
        ConvShape::new(n, 1, 8, (5, 5), (28, 28)),
        ConvShape::new(n, 8, 8, (5, 5), (12, 12)),
        ConvShape::new(n, 3, 12, (5, 5), (32, 32)),
        ConvShape::new(n, 12, 24, (3, 3), (14, 14)),
        ConvShape::new(n, 1, 8, (3, 3), (28, 28)),
        ConvShape::new(n, 4, 4, (3, 3), (8, 8)),
        ConvShape::new(n, 1, 4, (9, 9), (28, 28)),
        ConvShape::new(n, 3, 8, (7, 7), (16, 16)),
    ]
}

fn seeded(dims: &[usize], seed: u32) -> Tensor {
    let len: usize = dims.iter().product();
    let mut s = seed.wrapping_mul(2_654_435_761).max(1);
    let data = (0..len)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 17;
            s ^= s << 5;
            (s as f32 / u32::MAX as f32) - 0.5
        })
        .collect();
    Tensor::from_vec(dims, data).expect("grid shape")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn time_median(reps: usize, mut f: impl FnMut()) -> f64 {
    f();
    median(
        (0..reps.max(1))
            .map(|_| {
                let t = Instant::now();
                f();
                t.elapsed().as_secs_f64()
            })
            .collect(),
    )
}

/// Median time of one `backend` call on `shape` after a warm-up call.
pub fn time_backend(shape: &ConvShape, backend: ConvBackend, reps: usize) -> fastnn::Result<f64> {
    shape.validate(backend.mode())?;
    let x = seeded(&shape.input_dims(), 1);
    let k = seeded(&shape.kernel_dims(), 2);
    let mut err = None;
    let secs = time_median(reps, || {
        let r = match backend.mode() {
            ConvMode::Valid => conv_valid(&x, &k, shape, backend),
            ConvMode::Full => conv_full(&x, &k, shape, backend),
        };
        if let Err(e) = r {
            err = Some(e);
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(secs),
    }
}

fn time_gemm(size: usize, path: GemmPath, reps: usize) -> f64 {
    let a = seeded(&[size, size], 3);
    let b = seeded(&[size, size], 4);
    let mut c = vec![0.0f32; size * size];
    time_median(reps, || {
        sgemm_with_path(
            MatRef::new(a.as_slice(), size, size),
            MatRef::new(b.as_slice(), size, size),
            GemmFlags::NN,
            &mut c,
            size,
            false,
            path,
        )
        .expect("square gemm");
    })
}

/// Rules that send every grid shape to its measured winner. Shapes with
/// equal kernel and image areas share one rule, won by the smallest total.
fn rules_for(timings: &[Timing], mode: ConvMode) -> Vec<DispatchRule> {
    let mut totals: BTreeMap<(usize, std::cmp::Reverse<usize>), BTreeMap<&'static str, (ConvBackend, f64)>> =
        BTreeMap::new();
    for t in timings.iter().filter(|t| t.backend.mode() == mode) {
        let key = (t.shape.kernel_area(), std::cmp::Reverse(t.shape.image_area()));
        let e = totals.entry(key).or_default().entry(t.backend.tag()).or_insert((t.backend, 0.0));
        e.1 += t.seconds;
    }
    // kernel area ascending, image area descending: no earlier rule can
    // match a later rule's own shape
    totals
        .into_iter()
        .map(|((kernel_area, hw), per)| {
            let (backend, _) = per
                .into_values()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one backend");
            DispatchRule {
                mode,
                kh_kw_max: kernel_area,
                hw_min: hw.0,
                backend,
                channels: None,
            }
        })
        .collect()
}

pub fn calibrate_heuristics(grid: &[ConvShape], opts: CalibrateOptions) -> fastnn::Result<Calibration> {
    let mut timings = Vec::new();
    for shape in grid {
        for mode in [ConvMode::Valid, ConvMode::Full] {
            if shape.validate(mode).is_err() {
                continue;
            }
            for &backend in ConvBackend::for_mode(mode) {
                timings.push(Timing {
                    shape: *shape,
                    backend,
                    seconds: time_backend(shape, backend, opts.reps)?,
                });
            }
        }
    }
    let mut gemm = Vec::new();
    let mut small_max = None;
    if opts.gemm {
        let mut still_small = true;
        for size in GEMM_SIZES {
            let s = time_gemm(size, GemmPath::Small, opts.reps);
            let b = time_gemm(size, GemmPath::Blocked, opts.reps);
            gemm.push((size, s, b));
            still_small &= s <= b;
            if still_small {
                small_max = Some(size);
            }
        }
        small_max = small_max.or(Some(0));
    }
    let mut rules = rules_for(&timings, ConvMode::Valid);
    rules.extend(rules_for(&timings, ConvMode::Full));
    let dispatcher = Dispatcher::from_rules(rules, small_max)?;
    Ok(Calibration {
        timings,
        dispatcher,
        gemm,
    })
}

impl Calibration {
    pub fn table(&self) -> String {
        self.dispatcher.to_table()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.table())
    }

    pub fn seconds(&self, shape: &ConvShape, backend: ConvBackend) -> Option<f64> {
        self.timings
            .iter()
            .find(|t| t.shape == *shape && t.backend == backend)
            .map(|t| t.seconds)
    }

    /// Fastest measured backend for `shape` in `mode`.
    pub fn best(&self, shape: &ConvShape, mode: ConvMode) -> Option<(ConvBackend, f64)> {
        ConvBackend::for_mode(mode)
            .iter()
            .filter_map(|&b| self.seconds(shape, b).map(|s| (b, s)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Shapes in the grid, in measurement order, without repeats.
    pub fn shapes(&self) -> Vec<ConvShape> {
        let mut out: Vec<ConvShape> = Vec::new();
        for t in &self.timings {
            if !out.contains(&t.shape) {
                out.push(t.shape);
            }
        }
        out
    }

    /// Human-readable table of per-shape timings and winners.
    pub fn winner_matrix(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<28} {:<6} {:>12} {:>12}  {:<16} {}",
            "shape (n c k kh*kw h*w)", "mode", "backend A", "backend B", "winner", "dispatched"
        );
        for shape in self.shapes() {
            for mode in [ConvMode::Valid, ConvMode::Full] {
                let Some((best, _)) = self.best(&shape, mode) else { continue };
                let times: Vec<String> = ConvBackend::for_mode(mode)
                    .iter()
                    .map(|&b| {
                        self.seconds(&shape, b)
                            .map_or("-".into(), |t| format!("{:.3}ms", t * 1e3))
                    })
                    .collect();
                let picked = self.dispatcher.select(mode, &shape);
                let _ = writeln!(
                    s,
                    "{:<28} {:<6} {:>12} {:>12}  {:<16} {}",
                    format!(
                        "{} {} {} {}x{} {}x{}",
                        shape.n, shape.c_in, shape.k, shape.kh, shape.kw, shape.h, shape.w
                    ),
                    mode.as_str(),
                    times[0],
                    times[1],
                    best.tag(),
                    picked.tag()
                );
            }
        }
        for (size, small, blocked) in &self.gemm {
            let _ = writeln!(
                s,
                "gemm {size:>4}: small {:.3}ms blocked {:.3}ms",
                small * 1e3,
                blocked * 1e3
            );
        }
        if let Some(g) = self.dispatcher.small_gemm_max() {
            let _ = writeln!(s, "small gemm up to extent {g}");
        }
        s
    }
}
