//! Plain loops for the dense products. Summation order is fixed so results
//! are reproducible bit-for-bit.

use rayon::prelude::*;

use super::Scalar;

/// Below this many multiply-adds the products stay on the calling thread.
const PARALLEL_WORK: usize = 1 << 15;

fn for_each_row<F: Scalar>(out: &mut [F], n: usize, work: usize, f: impl Fn(usize, &mut [F]) + Sync) {
    if n == 0 {
        return;
    }
    if work < PARALLEL_WORK {
        out.chunks_mut(n).enumerate().for_each(|(i, row)| f(i, row));
    } else {
        out.par_chunks_mut(n).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// `a (m x k) * b (k x n)`
pub(crate) fn matmul<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for_each_row(&mut out, n, m * k * n, |i, out_row| {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + aip * bv;
            }
        }
    });
    out
}

/// `a (m x k) * b^T` where `b` is stored `n x k`.
pub(crate) fn matmul_nt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for_each_row(&mut out, n, m * k * n, |i, out_row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc = acc + x * y;
            }
            *o = acc;
        }
    });
    out
}

/// `a^T * b` where `a` is stored `m x k` and `b` is `m x n`; result `k x n`.
pub(crate) fn matmul_tn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); k * n];
    for_each_row(&mut out, n, m * k * n, |p, out_row| {
        for i in 0..m {
            let aip = a[i * k + p];
            if aip == F::zero() {
                continue;
            }
            let b_row = &b[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + aip * bv;
            }
        }
    });
    out
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub(crate) fn softplus<F: Scalar>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub(crate) fn softmax_row<F: Scalar>(row: &[F], out: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

pub(crate) fn log_softmax_row<F: Scalar>(row: &[F], out: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = row.iter().map(|&x| (x - max).exp()).sum::<F>().ln() + max;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = x - lse;
    }
}
