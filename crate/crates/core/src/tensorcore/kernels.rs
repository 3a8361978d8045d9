//! Forward kernels and their vector-Jacobian products.
//!
//! Everything here is a plain function over slices or [`Tensor`]s; the tape
//! in [`super::tape`] wires them together for reverse-mode gradients.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::shape(format!(
            "matmul needs matrices, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul inner dims differ: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    Ok(Tensor::raw(vec![m, n], out))
}

/// Numerically stable softmax of one vector.
pub fn softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn softmax_vjp<T: Scalar>(y: &[T], g: &[T]) -> Vec<T> {
    let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
    y.iter().zip(g).map(|(&yi, &gi)| yi * (gi - dot)).collect()
}

/// Euclidean projection onto the probability simplex (sparsemax).
///
/// Sort descending, find the largest `k` with `1 + k z_(k) > sum_{j<=k} z_(j)`,
/// threshold at `tau = (sum_{j<=k} z_(j) - 1) / k`. Inputs are first
/// shifted by their maximum, so any shift that is exact in floating point
/// leaves the output bit-identical.
pub fn sparsemax<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let z: Vec<T> = x.iter().map(|&v| v - max).collect();
    let tau = sparsemax_threshold(&z);
    z.iter().map(|&v| (v - tau).max(T::zero())).collect()
}

pub fn sparsemax_threshold<T: Scalar>(x: &[T]) -> T {
    let mut z: Vec<T> = x.to_vec();
    z.sort_by(|a, b| b.partial_cmp(a).expect("finite input"));
    let mut cumsum = T::zero();
    let mut support_sum = T::zero();
    let mut k = 0usize;
    for (i, &zi) in z.iter().enumerate() {
        cumsum = cumsum + zi;
        let kk = T::of_usize(i + 1);
        if T::one() + kk * zi > cumsum {
            k = i + 1;
            support_sum = cumsum;
        }
    }
    (support_sum - T::one()) / T::of_usize(k.max(1))
}

/// Gradient on the support is `g - mean(g_support)`, zero elsewhere.
pub(crate) fn sparsemax_vjp<T: Scalar>(y: &[T], g: &[T]) -> Vec<T> {
    let support: Vec<bool> = y.iter().map(|&v| v > T::zero()).collect();
    let count = support.iter().filter(|&&s| s).count();
    if count == 0 {
        return vec![T::zero(); y.len()];
    }
    let mean = g
        .iter()
        .zip(&support)
        .filter(|(_, &s)| s)
        .map(|(&v, _)| v)
        .sum::<T>()
        / T::of_usize(count);
    g.iter()
        .zip(&support)
        .map(|(&v, &s)| if s { v - mean } else { T::zero() })
        .collect()
}

/// Row-wise application of a last-axis kernel.
pub(crate) fn rowwise<T: Scalar>(x: &Tensor<T>, f: impl Fn(&[T]) -> Vec<T>) -> Tensor<T> {
    let c = x.cols();
    let data: Vec<T> = x.data().chunks(c).flat_map(f).collect();
    Tensor::raw(x.shape().to_vec(), data)
}

pub(crate) fn rowwise_vjp<T: Scalar>(
    y: &Tensor<T>,
    g: &Tensor<T>,
    f: impl Fn(&[T], &[T]) -> Vec<T>,
) -> Tensor<T> {
    let c = y.cols();
    let data: Vec<T> = y
        .data()
        .chunks(c)
        .zip(g.data().chunks(c))
        .flat_map(|(yr, gr)| f(yr, gr))
        .collect();
    Tensor::raw(y.shape().to_vec(), data)
}

/// Same-length 1-D convolution over the rows of `x` (`M x d`) with filters
/// `w x d x F`, zero padded by `(w-1)/2` on both sides. No bias.
pub fn conv1d<T: Scalar>(x: &Tensor<T>, filters: &Tensor<T>, width: usize) -> Result<Tensor<T>> {
    let (m, d) = conv_dims(x, filters, width)?;
    let f = filters.len() / (width * d);
    let pad = (width - 1) / 2;
    let (xd, wd) = (x.data(), filters.data());
    let mut out = vec![T::zero(); m * f];
    for pos in 0..m {
        let orow = &mut out[pos * f..(pos + 1) * f];
        for o in 0..width {
            let src = pos as isize + o as isize - pad as isize;
            if src < 0 || src >= m as isize {
                continue;
            }
            let xrow = &xd[src as usize * d..(src as usize + 1) * d];
            for (c, &xv) in xrow.iter().enumerate() {
                let wrow = &wd[(o * d + c) * f..(o * d + c + 1) * f];
                for (ov, &wv) in orow.iter_mut().zip(wrow) {
                    *ov = *ov + xv * wv;
                }
            }
        }
    }
    Ok(Tensor::raw(vec![m, f], out))
}

fn conv_dims<T: Scalar>(
    x: &Tensor<T>,
    filters: &Tensor<T>,
    width: usize,
) -> Result<(usize, usize)> {
    if width.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "conv1d width must be odd, got {width}"
        )));
    }
    if x.rank() != 2 {
        return Err(Error::shape("conv1d input must be M x d"));
    }
    let d = x.cols();
    if !filters.len().is_multiple_of(width * d) || filters.rows() != width * d {
        return Err(Error::shape(format!(
            "filters {:?} incompatible with width {} and depth {}",
            filters.shape(),
            width,
            d
        )));
    }
    Ok((x.rows(), d))
}

/// Returns `(dx, dfilters)` for upstream gradient `g` (`M x F`).
pub(crate) fn conv1d_vjp<T: Scalar>(
    x: &Tensor<T>,
    filters: &Tensor<T>,
    width: usize,
    g: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let (m, d) = (x.rows(), x.cols());
    let f = g.cols();
    let pad = (width - 1) / 2;
    let (xd, wd, gd) = (x.data(), filters.data(), g.data());
    let mut dx = vec![T::zero(); m * d];
    let mut dw = vec![T::zero(); filters.len()];
    for pos in 0..m {
        let grow = &gd[pos * f..(pos + 1) * f];
        for o in 0..width {
            let src = pos as isize + o as isize - pad as isize;
            if src < 0 || src >= m as isize {
                continue;
            }
            let s = src as usize;
            for c in 0..d {
                let base = (o * d + c) * f;
                let xv = xd[s * d + c];
                let mut acc = T::zero();
                for (j, &gv) in grow.iter().enumerate() {
                    acc = acc + wd[base + j] * gv;
                    dw[base + j] = dw[base + j] + xv * gv;
                }
                dx[s * d + c] = dx[s * d + c] + acc;
            }
        }
    }
    (
        Tensor::raw(vec![m, d], dx),
        Tensor::raw(filters.shape().to_vec(), dw),
    )
}

/// Column mean of an `M x d` matrix.
pub fn avg_pool<T: Scalar>(z: &Tensor<T>) -> Tensor<T> {
    let (m, d) = (z.rows(), z.cols());
    let mut out = vec![T::zero(); d];
    for r in z.data().chunks(d) {
        for (o, &v) in out.iter_mut().zip(r) {
            *o = *o + v;
        }
    }
    let inv = T::one() / T::of_usize(m);
    Tensor::raw(vec![d], out.into_iter().map(|v| v * inv).collect())
}

/// Negative-sampling cross-entropy: `-ln(e^pos / (e^pos + sum e^neg))`.
pub fn ce_negsample<T: Scalar>(y_pos: T, y_negs: &[T]) -> T {
    let mut logits = Vec::with_capacity(y_negs.len() + 1);
    logits.push(y_pos);
    logits.extend_from_slice(y_negs);
    ce_first(&logits)
}

/// Cross-entropy with the target at index 0, via log-sum-exp.
pub(crate) fn ce_first<T: Scalar>(logits: &[T]) -> T {
    logsumexp(logits) - logits[0]
}

pub(crate) fn logsumexp<T: Scalar>(x: &[T]) -> T {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    max + x.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

pub fn mse_matrix<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "mse shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let sum: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(sum / T::of_usize(pred.len()))
}

/// `sum_i softmax(beta x)_i * i` with 0-based indices.
pub fn softargmax<T: Scalar>(x: &[T], beta: T) -> Result<T> {
    if beta < T::one() {
        return Err(Error::invalid(format!(
            "softargmax beta must be >= 1, got {beta}"
        )));
    }
    if x.is_empty() {
        return Err(Error::invalid("softargmax of empty vector"));
    }
    let scaled: Vec<T> = x.iter().map(|&v| v * beta).collect();
    Ok(softmax(&scaled)
        .iter()
        .enumerate()
        .map(|(i, &p)| p * T::of_usize(i))
        .sum())
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
