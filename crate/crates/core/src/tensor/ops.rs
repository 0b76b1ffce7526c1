//! Forward and backward kernels on flat row-major buffers.
//!
//! Reductions always run left to right in index order so results are
//! reproducible bit for bit.

use crate::scalar::Scalar;

/// `out[m×n] = a[m×k] · b[k×n]`
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `out[m×n] = a[m×k] · b[n×k]ᵀ`
pub(crate) fn matmul_bt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// `out[k×n] = a[m×k]ᵀ · b[m×n]`
pub(crate) fn matmul_at<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

const GELU_C: f64 = 0.044_715;

fn gelu_k<T: Scalar>() -> T {
    T::of((2.0 / std::f64::consts::PI).sqrt())
}

/// Tanh approximation of GELU.
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let half = T::of(0.5);
    half * x * (T::one() + (gelu_k::<T>() * (x + c * x * x * x)).tanh())
}

pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let half = T::of(0.5);
    let k = gelu_k::<T>();
    let u = k * (x + c * x * x * x);
    let t = u.tanh();
    let du = k * (T::one() + T::of(3.0) * c * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

/// Numerically stable `ln(1 + eˣ)`.
pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Row-wise softmax over the last axis with max subtraction.
pub(crate) fn softmax_rows<T: Scalar>(x: &[T], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (row, orow) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - max).exp();
            sum += *o;
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
    out
}

pub(crate) fn softmax_rows_backward<T: Scalar>(y: &[T], g: &[T], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); y.len()];
    for ((yr, gr), or) in y.chunks(cols).zip(g.chunks(cols)).zip(out.chunks_mut(cols)) {
        let dot = yr.iter().zip(gr).fold(T::zero(), |s, (&a, &b)| s + a * b);
        for ((o, &yv), &gv) in or.iter_mut().zip(yr).zip(gr) {
            *o = yv * (gv - dot);
        }
    }
    out
}

/// Normalized rows and per-row reciprocal standard deviations.
pub(crate) fn layernorm_stats<T: Scalar>(x: &[T], cols: usize, eps: T) -> (Vec<T>, Vec<T>) {
    let n = T::of(cols as f64);
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(x.len() / cols.max(1));
    for (row, hrow) in x.chunks(cols).zip(xhat.chunks_mut(cols)) {
        let mean = row.iter().fold(T::zero(), |s, &v| s + v) / n;
        let var = row.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / n;
        let r = T::one() / (var + eps).sqrt();
        for (h, &v) in hrow.iter_mut().zip(row) {
            *h = (v - mean) * r;
        }
        rstd.push(r);
    }
    (xhat, rstd)
}

/// Gradient of the normalization step (before the affine transform).
pub(crate) fn layernorm_backward<T: Scalar>(xhat: &[T], rstd: &[T], gxhat: &[T], cols: usize) -> Vec<T> {
    let n = T::of(cols as f64);
    let mut out = vec![T::zero(); xhat.len()];
    for (r, ((hrow, grow), orow)) in xhat
        .chunks(cols)
        .zip(gxhat.chunks(cols))
        .zip(out.chunks_mut(cols))
        .enumerate()
    {
        let sum_g = grow.iter().fold(T::zero(), |s, &v| s + v);
        let sum_gh = grow.iter().zip(hrow).fold(T::zero(), |s, (&g, &h)| s + g * h);
        let scale = rstd[r] / n;
        for ((o, &g), &h) in orow.iter_mut().zip(grow).zip(hrow) {
            *o = scale * (n * g - sum_g - h * sum_gh);
        }
    }
    out
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Output `i` along each output axis `a` reads input axis `perm[a]`.
pub(crate) fn permute<T: Scalar>(x: &[T], shape: &[usize], perm: &[usize]) -> (Vec<T>, Vec<usize>) {
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides(shape);
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(x.len());
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..x.len() {
        let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(x[off]);
        for a in (0..idx.len()).rev() {
            idx[a] += 1;
            if idx[a] < out_shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    (out, out_shape)
}

pub(crate) fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}
