//! Row kernels for the input-distance pass.
//!
//! When every input value is an integer in `0..=255` (raw image pixels) the
//! euclidean and manhattan distances are computed on bytes with integer
//! accumulation. Every partial sum is an exact integer well below 2^53, so the
//! result is bit-identical to the `f64` path; only throughput differs.

use crate::dataset::Matrix;
use crate::metrics::{Metric, MetricKind};

/// Number of anchors scanned together against each candidate row.
pub const ANCHOR_BLOCK: usize = 8;

pub(crate) enum RowKernel<'a> {
    Bytes {
        data: Vec<u8>,
        dim: usize,
        kind: MetricKind,
    },
    Float {
        m: &'a Matrix,
        kind: MetricKind,
    },
}

impl<'a> RowKernel<'a> {
    pub(crate) fn new(m: &'a Matrix, kind: MetricKind) -> Self {
        // 255^2 * dim must fit the u32 accumulator
        let fits = (m.cols() as u64) * 255 * 255 <= u64::from(u32::MAX);
        let bytes_ok = matches!(kind, MetricKind::Euclidean | MetricKind::Manhattan)
            && fits
            && m
                .as_slice()
                .iter()
                .all(|&v| (0.0..=255.0).contains(&v) && v.fract() == 0.0);
        if bytes_ok {
            RowKernel::Bytes {
                data: m.as_slice().iter().map(|&v| v as u8).collect(),
                dim: m.cols(),
                kind,
            }
        } else {
            RowKernel::Float { m, kind }
        }
    }

    #[cfg(test)]
    pub(crate) fn float(m: &'a Matrix, kind: MetricKind) -> Self {
        RowKernel::Float { m, kind }
    }

    #[cfg(test)]
    pub(crate) fn is_bytes(&self) -> bool {
        matches!(self, RowKernel::Bytes { .. })
    }

    /// Fills `out[b * n + j]` with the distance from anchor `anchors.start + b` to `j`.
    pub(crate) fn fill_rows(&self, anchors: std::ops::Range<usize>, n: usize, out: &mut [f64]) {
        debug_assert!(anchors.len() <= ANCHOR_BLOCK);
        debug_assert_eq!(out.len(), anchors.len() * n);
        match self {
            RowKernel::Float { m, kind } => {
                for (b, i) in anchors.enumerate() {
                    let a = m.row(i);
                    let row = &mut out[b * n..(b + 1) * n];
                    for (j, slot) in row.iter_mut().enumerate() {
                        *slot = kind.eval(a, m.row(j));
                    }
                }
            }
            RowKernel::Bytes { data, dim, kind } => {
                let squared = *kind == MetricKind::Euclidean;
                byte_rows(data, *dim, anchors, n, squared, out);
            }
        }
    }
}

// Wrapping ops keep overflow checks out of the loop so it vectorizes in every
// profile; the bounds in `RowKernel::new` rule out actual wrap-around.
#[inline(always)]
fn sq_diff_sum(a: &[u8], b: &[u8]) -> u32 {
    // i16 products pair up into i32 lanes (pmaddwd on x86)
    let mut acc = [0i32; 16];
    let mut ca = a.chunks_exact(16);
    let mut cb = b.chunks_exact(16);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..16 {
            let d = i16::from(xa[l]).wrapping_sub(i16::from(xb[l]));
            acc[l] = acc[l].wrapping_add(i32::from(d).wrapping_mul(i32::from(d)));
        }
    }
    let mut total = acc.iter().fold(0u32, |t, &v| t.wrapping_add(v as u32));
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = i32::from(x) - i32::from(y);
        total = total.wrapping_add((d * d) as u32);
    }
    total
}

#[inline(always)]
fn abs_diff_sum(a: &[u8], b: &[u8]) -> u32 {
    a.iter()
        .zip(b)
        .fold(0u32, |t, (&x, &y)| t.wrapping_add(u32::from(x.abs_diff(y))))
}

#[inline(always)]
fn byte_rows_generic(
    data: &[u8],
    dim: usize,
    anchors: std::ops::Range<usize>,
    n: usize,
    squared: bool,
    out: &mut [f64],
) {
    let start = anchors.start;
    let count = anchors.len();
    for j in 0..n {
        let cand = &data[j * dim..(j + 1) * dim];
        for b in 0..count {
            let a = &data[(start + b) * dim..(start + b + 1) * dim];
            out[b * n + j] = if squared {
                f64::from(sq_diff_sum(a, cand)).sqrt()
            } else {
                f64::from(abs_diff_sum(a, cand))
            };
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn byte_rows_avx2(
    data: &[u8],
    dim: usize,
    anchors: std::ops::Range<usize>,
    n: usize,
    squared: bool,
    out: &mut [f64],
) {
    byte_rows_generic(data, dim, anchors, n, squared, out)
}

fn byte_rows(
    data: &[u8],
    dim: usize,
    anchors: std::ops::Range<usize>,
    n: usize,
    squared: bool,
    out: &mut [f64],
) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports avx2, checked above.
            unsafe { byte_rows_avx2(data, dim, anchors, n, squared, out) };
            return;
        }
    }
    byte_rows_generic(data, dim, anchors, n, squared, out)
}
