//! Single-precision matrix multiplication.
//!
//! Two implementations share one contract: every output element is the
//! sum over the inner index in ascending order, starting from zero (or from
//! the existing output when accumulating). The small-matrix path keeps a row
//! of eight accumulators in registers; the blocked path packs `op(B)` into
//! 16-wide column panels and runs a 4x16 micro-kernel over row blocks in
//! parallel. Because the summation order is identical, both paths produce
//! the same bits.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Largest extent (over m, n and k) served by the small-matrix kernel.
pub const DEFAULT_SMALL_GEMM_MAX: usize = 64;

static SMALL_GEMM_MAX: AtomicUsize = AtomicUsize::new(DEFAULT_SMALL_GEMM_MAX);

/// Below this many output elements the blocked kernel runs on one thread.
pub const PARALLEL_MIN_OUTPUT: usize = 64 * 64;

const MR: usize = 4;
const NR: usize = 16;
const SMALL_W: usize = 8;

pub fn small_gemm_threshold() -> usize {
    SMALL_GEMM_MAX.load(Ordering::Relaxed)
}

pub fn set_small_gemm_threshold(max_extent: usize) {
    SMALL_GEMM_MAX.store(max_extent, Ordering::Relaxed);
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GemmFlags {
    pub transpose_a: bool,
    pub transpose_b: bool,
}

impl GemmFlags {
    pub const NN: GemmFlags = GemmFlags {
        transpose_a: false,
        transpose_b: false,
    };
    pub const NT: GemmFlags = GemmFlags {
        transpose_a: false,
        transpose_b: true,
    };
    pub const TN: GemmFlags = GemmFlags {
        transpose_a: true,
        transpose_b: false,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GemmPath {
    Small,
    Blocked,
}

/// Borrowed row-major matrix with leading dimension `ld` (≥ cols).
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a> {
    pub data: &'a [f32],
    pub rows: usize,
    pub cols: usize,
    pub ld: usize,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            ld: cols,
        }
    }

    pub fn strided(data: &'a [f32], rows: usize, cols: usize, ld: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            ld,
        }
    }

    /// View over a rank-2 tensor (padding honoured through `ld`).
    pub fn from_tensor(t: &'a Tensor) -> Result<Self> {
        if t.rank() != 2 {
            return Err(shape_err(format!(
                "gemm operands must be rank 2, got {:?}",
                t.dims()
            )));
        }
        Ok(MatRef::strided(t.as_slice(), t.dims()[0], t.dims()[1], t.stride_last()))
    }

    fn check(&self) -> Result<()> {
        if self.ld < self.cols
            || (self.rows > 0 && self.data.len() < (self.rows - 1) * self.ld + self.cols)
        {
            return Err(shape_err("matrix buffer too small for its extents"));
        }
        Ok(())
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.ld + c]
    }
}

fn op_extents(m: &MatRef<'_>, transpose: bool) -> (usize, usize) {
    if transpose {
        (m.cols, m.rows)
    } else {
        (m.rows, m.cols)
    }
}

/// Contiguous row-major copy of `op(m)`, or `None` when `m` can be read in place.
fn materialize(m: &MatRef<'_>, transpose: bool) -> Option<Vec<f32>> {
    if !transpose {
        return None;
    }
    let mut out = vec![0.0f32; m.rows * m.cols];
    for r in 0..m.rows {
        for c in 0..m.cols {
            out[c * m.rows + r] = m.at(r, c);
        }
    }
    Some(out)
}

fn choose_path(m: usize, n: usize, k: usize) -> GemmPath {
    if m.max(n).max(k) <= small_gemm_threshold() {
        GemmPath::Small
    } else {
        GemmPath::Blocked
    }
}

/// `C = op(A)·op(B)` (or `C += ...` when `accumulate`), writing into `c`
/// with leading dimension `ldc`.
pub fn sgemm(
    a: MatRef<'_>,
    b: MatRef<'_>,
    flags: GemmFlags,
    c: &mut [f32],
    ldc: usize,
    accumulate: bool,
) -> Result<()> {
    let (m, k) = op_extents(&a, flags.transpose_a);
    let n = op_extents(&b, flags.transpose_b).1;
    sgemm_with_path(a, b, flags, c, ldc, accumulate, choose_path(m, n, k))
}

pub fn sgemm_with_path(
    a: MatRef<'_>,
    b: MatRef<'_>,
    flags: GemmFlags,
    c: &mut [f32],
    ldc: usize,
    accumulate: bool,
    path: GemmPath,
) -> Result<()> {
    a.check()?;
    b.check()?;
    let (m, k) = op_extents(&a, flags.transpose_a);
    let (kb, n) = op_extents(&b, flags.transpose_b);
    if k != kb {
        return Err(shape_err(format!(
            "gemm inner extents disagree: op(A) is {m}x{k}, op(B) is {kb}x{n}"
        )));
    }
    if ldc < n || (m > 0 && c.len() < (m - 1) * ldc + n) {
        return Err(shape_err("gemm output buffer too small"));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }

    let a_packed = materialize(&a, flags.transpose_a);
    let a_op = match &a_packed {
        Some(buf) => MatRef::new(buf, m, k),
        None => a,
    };

    match path {
        GemmPath::Small => {
            let b_packed = materialize(&b, flags.transpose_b);
            let b_op = match &b_packed {
                Some(buf) => MatRef::new(buf, k, n),
                None => b,
            };
            small_kernel(a_op, b_op, c, ldc, accumulate);
        }
        GemmPath::Blocked => {
            let panels = pack_b_panels(&b, flags.transpose_b, k, n);
            blocked_kernel(a_op, &panels, k, n, c, ldc, accumulate);
        }
    }
    Ok(())
}

/// Allocating convenience over rank-2 tensors. The result is packed.
pub fn gemm(a: &Tensor, b: &Tensor, flags: GemmFlags) -> Result<Tensor> {
    let am = MatRef::from_tensor(a)?;
    let bm = MatRef::from_tensor(b)?;
    let m = op_extents(&am, flags.transpose_a).0;
    let n = op_extents(&bm, flags.transpose_b).1;
    let mut out = vec![0.0f32; m * n];
    sgemm(am, bm, flags, &mut out, n, false)?;
    Tensor::from_vec(&[m, n], out)
}

fn small_kernel(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f32], ldc: usize, accumulate: bool) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    for i in 0..m {
        let a_row = &a.data[i * a.ld..i * a.ld + k];
        let c_row = &mut c[i * ldc..i * ldc + n];
        let mut j = 0;
        while j + SMALL_W <= n {
            let mut acc = [0.0f32; SMALL_W];
            if accumulate {
                acc.copy_from_slice(&c_row[j..j + SMALL_W]);
            }
            for (p, &av) in a_row.iter().enumerate() {
                let bv = &b.data[p * b.ld + j..p * b.ld + j + SMALL_W];
                for t in 0..SMALL_W {
                    acc[t] += av * bv[t];
                }
            }
            c_row[j..j + SMALL_W].copy_from_slice(&acc);
            j += SMALL_W;
        }
        for jj in j..n {
            let mut acc = if accumulate { c_row[jj] } else { 0.0 };
            for (p, &av) in a_row.iter().enumerate() {
                acc += av * b.data[p * b.ld + jj];
            }
            c_row[jj] = acc;
        }
    }
}

/// Packs `op(B)` (k x n) into ceil(n/NR) panels of k x NR, zero-filled.
fn pack_b_panels(b: &MatRef<'_>, transpose: bool, k: usize, n: usize) -> Vec<f32> {
    let panels = n.div_ceil(NR);
    let mut out = vec![0.0f32; panels * k * NR];
    for (pi, panel) in out.chunks_exact_mut(k * NR).enumerate() {
        let j0 = pi * NR;
        let w = NR.min(n - j0);
        for p in 0..k {
            let dst = &mut panel[p * NR..p * NR + w];
            if transpose {
                for (t, d) in dst.iter_mut().enumerate() {
                    *d = b.at(j0 + t, p);
                }
            } else {
                dst.copy_from_slice(&b.data[p * b.ld + j0..p * b.ld + j0 + w]);
            }
        }
    }
    out
}

#[inline(always)]
fn micro_kernel(
    a: &MatRef<'_>,
    row0: usize,
    rows: usize,
    panel: &[f32],
    k: usize,
    acc: &mut [[f32; NR]; MR],
) {
    if rows == MR {
        let a0 = &a.data[row0 * a.ld..row0 * a.ld + k];
        let a1 = &a.data[(row0 + 1) * a.ld..(row0 + 1) * a.ld + k];
        let a2 = &a.data[(row0 + 2) * a.ld..(row0 + 2) * a.ld + k];
        let a3 = &a.data[(row0 + 3) * a.ld..(row0 + 3) * a.ld + k];
        for p in 0..k {
            let bv: &[f32; NR] = panel[p * NR..p * NR + NR].try_into().unwrap();
            let (x0, x1, x2, x3) = (a0[p], a1[p], a2[p], a3[p]);
            for t in 0..NR {
                acc[0][t] += x0 * bv[t];
                acc[1][t] += x1 * bv[t];
                acc[2][t] += x2 * bv[t];
                acc[3][t] += x3 * bv[t];
            }
        }
    } else {
        for r in 0..rows {
            let ar = &a.data[(row0 + r) * a.ld..(row0 + r) * a.ld + k];
            for (p, &x) in ar.iter().enumerate() {
                let bv = &panel[p * NR..p * NR + NR];
                for t in 0..NR {
                    acc[r][t] += x * bv[t];
                }
            }
        }
    }
}

fn blocked_rows(
    a: MatRef<'_>,
    panels: &[f32],
    k: usize,
    n: usize,
    row_base: usize,
    c_block: &mut [f32],
    ldc: usize,
    accumulate: bool,
) {
    let rows_here = if c_block.len() >= n {
        (c_block.len() - n) / ldc + 1
    } else {
        0
    };
    let mut r = 0;
    while r < rows_here {
        let rows = MR.min(rows_here - r);
        for (pi, panel) in panels.chunks_exact(k * NR).enumerate() {
            let j0 = pi * NR;
            let w = NR.min(n - j0);
            let mut acc = [[0.0f32; NR]; MR];
            if accumulate {
                for (rr, acc_row) in acc.iter_mut().enumerate().take(rows) {
                    let s = (r + rr) * ldc + j0;
                    acc_row[..w].copy_from_slice(&c_block[s..s + w]);
                }
            }
            micro_kernel(&a, row_base + r, rows, panel, k, &mut acc);
            for (rr, acc_row) in acc.iter().enumerate().take(rows) {
                let s = (r + rr) * ldc + j0;
                c_block[s..s + w].copy_from_slice(&acc_row[..w]);
            }
        }
        r += rows;
    }
}

fn blocked_kernel(
    a: MatRef<'_>,
    panels: &[f32],
    k: usize,
    n: usize,
    c: &mut [f32],
    ldc: usize,
    accumulate: bool,
) {
    let m = a.rows;
    let used = (m - 1) * ldc + n;
    let c = &mut c[..used];
    if m * n < PARALLEL_MIN_OUTPUT || rayon::current_num_threads() == 1 {
        blocked_rows(a, panels, k, n, 0, c, ldc, accumulate);
        return;
    }
    let threads = rayon::current_num_threads();
    let block_rows = (m.div_ceil(threads * 2)).next_multiple_of(MR).max(MR);
    // Each chunk spans `block_rows` full rows of C; the last may be ragged.
    let chunk_len = block_rows * ldc;
    c.par_chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(bi, block)| {
            blocked_rows(a, panels, k, n, bi * block_rows, block, ldc, accumulate);
        });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut c = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0f32;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    fn random(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn transpose(x: &[f32], rows: usize, cols: usize) -> Vec<f32> {
        let mut t = vec![0.0; x.len()];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = x[r * cols + c];
            }
        }
        t
    }

    #[test]
    fn identity_times_b() {
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.set(&[i, i], 1.0);
        }
        let b = Tensor::from_vec(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(gemm(&eye, &b, GemmFlags::NN).unwrap(), b);
    }

    #[test]
    fn two_by_two() {
        let a = Tensor::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = Tensor::from_vec(&[2, 2], vec![5., 6., 7., 8.]).unwrap();
        let c = gemm(&a, &b, GemmFlags::NN).unwrap();
        assert_eq!(c.as_slice(), &[19., 22., 43., 50.]);
    }

    #[test]
    fn transpose_b_matches_explicit_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, 4 * 5);
        let b = random(&mut rng, 3 * 5);
        let at = Tensor::from_vec(&[4, 5], a.clone()).unwrap();
        let bt = Tensor::from_vec(&[3, 5], b.clone()).unwrap();
        let c = gemm(&at, &bt, GemmFlags::NT).unwrap();
        let want = naive(&a, &transpose(&b, 3, 5), 4, 5, 3);
        assert_eq!(c.as_slice(), want.as_slice());
    }

    #[test]
    fn dimension_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(gemm(&a, &b, GemmFlags::NN).is_err());
        assert!(gemm(&a, &b, GemmFlags::NT).is_ok());
        assert!(gemm(&Tensor::zeros(&[2, 3, 1]), &b, GemmFlags::NN).is_err());
    }

    #[test]
    fn both_paths_agree_with_naive_up_to_32() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let (m, k, n) = (
                rng.random_range(1..=32),
                rng.random_range(1..=32),
                rng.random_range(1..=32),
            );
            let a = random(&mut rng, m * k);
            let b = random(&mut rng, k * n);
            let want = naive(&a, &b, m, k, n);
            for path in [GemmPath::Small, GemmPath::Blocked] {
                let mut c = vec![0.0; m * n];
                sgemm_with_path(
                    MatRef::new(&a, m, k),
                    MatRef::new(&b, k, n),
                    GemmFlags::NN,
                    &mut c,
                    n,
                    false,
                    path,
                )
                .unwrap();
                assert_eq!(c, want, "{path:?} {m}x{k}x{n}");
            }
        }
    }

    #[test]
    fn accumulate_and_all_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, k, n) = (37, 70, 45);
        let a = random(&mut rng, m * k);
        let b = random(&mut rng, k * n);
        let c0 = random(&mut rng, m * n);
        let mut want = naive(&a, &b, m, k, n);
        for (w, c) in want.iter_mut().zip(&c0) {
            *w += c;
        }
        let at = transpose(&a, m, k);
        let bt = transpose(&b, k, n);
        for (flags, am, bm) in [
            (GemmFlags::NN, MatRef::new(&a, m, k), MatRef::new(&b, k, n)),
            (GemmFlags::TN, MatRef::new(&at, k, m), MatRef::new(&b, k, n)),
            (GemmFlags::NT, MatRef::new(&a, m, k), MatRef::new(&bt, n, k)),
            (
                GemmFlags {
                    transpose_a: true,
                    transpose_b: true,
                },
                MatRef::new(&at, k, m),
                MatRef::new(&bt, n, k),
            ),
        ] {
            for path in [GemmPath::Small, GemmPath::Blocked] {
                // Accumulating starts from c0, so summation is c0 + a0b0 + ...
                let mut c = c0.clone();
                sgemm_with_path(am, bm, flags, &mut c, n, true, path).unwrap();
                let err = c
                    .iter()
                    .zip(&want)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0f32, f32::max);
                assert!(err < 1e-4, "{flags:?} {path:?} err {err}");
            }
        }
    }

    #[test]
    fn padded_operands() {
        use crate::tensor::VectorWidth;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Tensor::from_vec(&[5, 3], random(&mut rng, 15)).unwrap();
        let b = Tensor::from_vec(&[3, 6], random(&mut rng, 18)).unwrap();
        let plain = gemm(&a, &b, GemmFlags::NN).unwrap();
        let padded = gemm(
            &a.copy_into_padded(VectorWidth::AVX),
            &b.copy_into_padded(VectorWidth::AVX),
            GemmFlags::NN,
        )
        .unwrap();
        assert_eq!(plain, padded);
    }
}
