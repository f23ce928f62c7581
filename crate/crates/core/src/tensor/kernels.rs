//! Slice-level numeric kernels. Row-major throughout.

use crate::scalar::Scalar;

/// `a[m×k] · b[k×n]`. Each output element sums over `p` in order.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    const W: usize = 8;
    let mut out = vec![T::zero(); m * n];
    let full = n - n % W;
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for j in (0..full).step_by(W) {
            let mut acc = [T::zero(); W];
            for (p, &a_ip) in a_row.iter().enumerate() {
                let b_chunk = &b[p * n + j..p * n + j + W];
                for l in 0..W {
                    acc[l] += a_ip * b_chunk[l];
                }
            }
            out_row[j..j + W].copy_from_slice(&acc);
        }
        for j in full..n {
            let mut acc = T::zero();
            for (p, &a_ip) in a_row.iter().enumerate() {
                acc += a_ip * b[p * n + j];
            }
            out_row[j] = acc;
        }
    }
    out
}

/// Dot product over eight interleaved partial sums, combined in a fixed order.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let split = x.len() - x.len() % 8;
    for (cx, cy) in x[..split].chunks_exact(8).zip(y[..split].chunks_exact(8)) {
        for l in 0..8 {
            lanes[l] += cx[l] * cy[l];
        }
    }
    let mut acc = ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
    for (&a, &b) in x[split..].iter().zip(&y[split..]) {
        acc += a * b;
    }
    acc
}

/// Accumulates `g[m×n] · b[k×n]ᵀ` into `out[m×k]`.
pub fn matmul_bt_acc<T: Scalar>(g: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            out[i * k + p] += dot(g_row, &b[p * n..(p + 1) * n]);
        }
    }
}

/// Accumulates `a[m×k]ᵀ · g[m×n]` into `out[k×n]`.
pub fn matmul_at_acc<T: Scalar>(a: &[T], g: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    const W: usize = 8;
    let full = n - n % W;
    for p in 0..k {
        let out_row = &mut out[p * n..(p + 1) * n];
        for j in (0..full).step_by(W) {
            let mut acc = [T::zero(); W];
            acc.copy_from_slice(&out_row[j..j + W]);
            for i in 0..m {
                let a_ip = a[i * k + p];
                let g_chunk = &g[i * n + j..i * n + j + W];
                for l in 0..W {
                    acc[l] += a_ip * g_chunk[l];
                }
            }
            out_row[j..j + W].copy_from_slice(&acc);
        }
        for j in full..n {
            let mut acc = out_row[j];
            for i in 0..m {
                acc += a[i * k + p] * g[i * n + j];
            }
            out_row[j] = acc;
        }
    }
}

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// In-place `exp(x − max) / Σ`. A lane that is entirely `−∞` becomes all zeros.
pub fn softmax_in_place<T: Scalar>(lane: &mut [T]) {
    let max = lane.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        lane.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut sum = T::zero();
    for v in lane.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in lane.iter_mut() {
        *v = *v / sum;
    }
}

/// `ln Σ exp(x)` with max subtraction.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = xs.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// First index of the maximum.
pub fn argmax<T: Scalar>(xs: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in xs.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

const GELU_COEF: f64 = 0.044715;

/// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    x * gelu_gate(x)
}

/// `½(1 + tanh u)` written as the logistic `1/(1 + e^{−2u})`.
#[inline]
fn gelu_gate<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let u = c * (x + T::lit(GELU_COEF) * x * x * x);
    T::one() / (T::one() + (-(u + u)).exp())
}

#[inline]
pub fn gelu_derivative<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = T::lit(GELU_COEF);
    let s = gelu_gate(x);
    let du = c * (T::one() + T::lit(3.0) * k * x * x);
    s + (x + x) * s * (T::one() - s) * du
}
