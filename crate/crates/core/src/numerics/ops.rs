//! Differentiable primitives on flat row-major slices.
//!
//! Each forward function has a matching `*_backward` that accumulates
//! (`+=`) into the gradient buffers it is handed, so callers can sum
//! contributions from many uses of the same parameter.

use crate::scalar::Scalar;

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = S::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn relu<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x
    } else {
        S::zero()
    }
}

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Softmax restricted to the entries where `mask` is true.
///
/// Masked entries are exactly zero. An all-masked input yields all zeros.
pub fn masked_softmax<S: Scalar>(scores: &[S], mask: &[bool]) -> Vec<S> {
    debug_assert_eq!(scores.len(), mask.len());
    let mut out = vec![S::zero(); scores.len()];
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return out;
    }
    let mut total = S::zero();
    for ((o, &x), &m) in out.iter_mut().zip(scores).zip(mask) {
        if m {
            *o = (x - max).exp();
            total += *o;
        }
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    out
}

/// Gradient of the scores given output `probs` and upstream `dprobs`.
pub fn masked_softmax_backward<S: Scalar>(probs: &[S], dprobs: &[S]) -> Vec<S> {
    let inner: S = probs.iter().zip(dprobs).map(|(&p, &d)| p * d).sum();
    probs.iter().zip(dprobs).map(|(&p, &d)| p * (d - inner)).collect()
}

/// `y += Wᵀx` for `W` stored row-major as `x.len() × y.len()`.
pub fn vec_mat<S: Scalar>(x: &[S], w: &[S], y: &mut [S]) {
    let out = y.len();
    debug_assert_eq!(w.len(), x.len() * out);
    for (i, &xi) in x.iter().enumerate() {
        if xi != S::zero() {
            axpy(xi, &w[i * out..(i + 1) * out], y);
        }
    }
}

/// Backward of [`vec_mat`]: `dx += W dy`, `dw += x dyᵀ`.
pub fn vec_mat_backward<S: Scalar>(x: &[S], w: &[S], dy: &[S], dx: Option<&mut [S]>, dw: &mut [S]) {
    let out = dy.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi != S::zero() {
            axpy(xi, dy, &mut dw[i * out..(i + 1) * out]);
        }
    }
    if let Some(dx) = dx {
        for (i, dxi) in dx.iter_mut().enumerate() {
            *dxi += dot(&w[i * out..(i + 1) * out], dy);
        }
    }
}

/// Geometry of a same-padded 1-D convolution bank.
///
/// Weights are laid out `[filter][tap][channel]`, so a filter is one
/// contiguous run of `kernel * in_dim` values that lines up with a window
/// of consecutive input rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl ConvGeom {
    pub fn weight_len(&self) -> usize {
        self.kernel * self.in_dim * self.out_dim
    }

    fn half(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// Input row range and filter tap offset feeding output position `i`,
    /// with rows at or beyond `len` treated as zero padding.
    #[inline]
    fn window(&self, i: usize, len: usize) -> (usize, usize, usize) {
        let half = self.half();
        let start = i.saturating_sub(half);
        let end = (i + half + 1).min(len);
        let tap0 = start + half - i;
        (start, end, tap0)
    }
}

/// Same-padded 1-D convolution, pre-activation.
///
/// `input` is `len × in_dim`; the result for position `i` and filter `f` is
/// written to `out[i * out_stride + out_offset + f]` for `i < len`.
/// Rows at or beyond `len` are zero padding and are never read.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_same<S: Scalar>(
    geom: ConvGeom,
    input: &[S],
    len: usize,
    weights: &[S],
    bias: &[S],
    out: &mut [S],
    out_stride: usize,
    out_offset: usize,
) {
    debug_assert!(geom.kernel % 2 == 1);
    let fw = geom.kernel * geom.in_dim;
    for i in 0..len {
        let (start, end, tap0) = geom.window(i, len);
        let window = &input[start * geom.in_dim..end * geom.in_dim];
        let woff = tap0 * geom.in_dim;
        let row = &mut out[i * out_stride + out_offset..i * out_stride + out_offset + geom.out_dim];
        for (f, o) in row.iter_mut().enumerate() {
            let filt = &weights[f * fw + woff..f * fw + woff + window.len()];
            *o = dot(filt, window) + bias[f];
        }
    }
}

/// Backward of [`conv1d_same`] given the pre-activation gradient laid out
/// like its output.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_same_backward<S: Scalar>(
    geom: ConvGeom,
    input: &[S],
    len: usize,
    weights: &[S],
    dout: &[S],
    out_stride: usize,
    out_offset: usize,
    mut dinput: Option<&mut [S]>,
    dweights: &mut [S],
    dbias: &mut [S],
) {
    let fw = geom.kernel * geom.in_dim;
    for i in 0..len {
        let (start, end, tap0) = geom.window(i, len);
        let window = &input[start * geom.in_dim..end * geom.in_dim];
        let woff = tap0 * geom.in_dim;
        let drow = &dout[i * out_stride + out_offset..i * out_stride + out_offset + geom.out_dim];
        for (f, &g) in drow.iter().enumerate() {
            if g == S::zero() {
                continue;
            }
            dbias[f] += g;
            let range = f * fw + woff..f * fw + woff + window.len();
            axpy(g, window, &mut dweights[range.clone()]);
            if let Some(di) = dinput.as_deref_mut() {
                axpy(g, &weights[range], &mut di[start * geom.in_dim..end * geom.in_dim]);
            }
        }
    }
}

/// Euclidean distance between two vectors.
pub fn euclidean<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<S>().sqrt()
}

/// Backward of [`euclidean`]: accumulates `g * (a - b) / dist` into `da`
/// and its negation into `db`. The gradient at zero distance is taken as 0.
pub fn euclidean_backward<S: Scalar>(a: &[S], b: &[S], dist: S, g: S, da: &mut [S], db: &mut [S]) {
    if dist <= S::zero() || g == S::zero() {
        return;
    }
    let scale = g / dist;
    for k in 0..a.len() {
        let d = scale * (a[k] - b[k]);
        da[k] += d;
        db[k] -= d;
    }
}

/// `out += Σ_k weights[k] * rows[k]` over rows of width `out.len()`.
pub fn weighted_sum<S: Scalar>(weights: &[S], rows: &[S], out: &mut [S]) {
    let w = out.len();
    for (k, &a) in weights.iter().enumerate() {
        if a != S::zero() {
            axpy(a, &rows[k * w..(k + 1) * w], out);
        }
    }
}

/// Inverted-dropout keep mask: kept units scaled by `1 / (1 - rate)`,
/// dropped units 0.
pub fn dropout_mask<S: Scalar, R: rand::Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<S> {
    if rate <= 0.0 {
        return vec![S::one(); len];
    }
    let keep = S::from_f64_lossy(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { S::zero() } else { keep })
        .collect()
}
