//! Low-level dense kernels.
//!
//! Every kernel here has a fixed floating-point reduction order, so results
//! are bit-identical regardless of thread count. Parallel loops only ever
//! split work across *independent output elements*; no reduction crosses a
//! thread boundary.

use crate::tensor::Scalar;
use rayon::prelude::*;

/// y += a * x
#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * xi;
    }
}

/// Dot product with 8 independent accumulator lanes.
///
/// The lane split is part of the kernel contract: the summation order is
/// fixed (lanes then fixed-order lane merge), which keeps results
/// reproducible while letting the compiler vectorize the reduction.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let pa = &a[i * 8..i * 8 + 8];
        let pb = &b[i * 8..i * 8 + 8];
        for l in 0..8 {
            acc[l] += pa[l] * pb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    let mut s = T::zero();
    for l in 0..8 {
        s += acc[l];
    }
    s + tail
}

/// Sum with the same fixed 8-lane order as [`dot`].
#[inline]
pub fn sum_lanes<T: Scalar>(a: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let pa = &a[i * 8..i * 8 + 8];
        for l in 0..8 {
            acc[l] += pa[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i];
    }
    let mut s = T::zero();
    for l in 0..8 {
        s += acc[l];
    }
    s + tail
}

/// out[m x n] = a[m x k] * b[k x n], all row-major. `out` is overwritten.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row = |i: usize, o: &mut [T]| {
        o.fill(T::zero());
        let ar = &a[i * k..(i + 1) * k];
        for (p, &aip) in ar.iter().enumerate() {
            axpy(o, aip, &b[p * n..(p + 1) * n]);
        }
    };
    if m * n * k >= PAR_FLOP_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(|(i, o)| row(i, o));
    } else {
        for (i, o) in out.chunks_mut(n).enumerate() {
            row(i, o);
        }
    }
}

/// out[m x n] = a[m x k] * b[n x k]^T (rows of `b` dotted against rows of `a`).
pub fn matmul_abt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    let row = |i: usize, o: &mut [T]| {
        let ar = &a[i * k..(i + 1) * k];
        for (j, oj) in o.iter_mut().enumerate() {
            *oj = dot(ar, &b[j * k..(j + 1) * k]);
        }
    };
    if m * n * k >= PAR_FLOP_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(|(i, o)| row(i, o));
    } else {
        for (i, o) in out.chunks_mut(n).enumerate() {
            row(i, o);
        }
    }
}

/// Work size (in multiply-adds) below which parallel dispatch is not worth it.
pub const PAR_FLOP_THRESHOLD: usize = 64 * 1024;

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(out.len(), rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
}
