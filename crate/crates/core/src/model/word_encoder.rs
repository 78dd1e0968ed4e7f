//! Review encoder: embedding lookup, two same-padded convolution layers,
//! and pooling of the resulting word vectors into one review vector.
//!
//! Buffers cover positions up to the last unmasked one; masked rows are
//! forced to zero after every layer so padding never leaks through the
//! convolution windows.

use crate::numerics::ops::{self, conv1d_same, conv1d_same_backward, relu};
use crate::numerics::{masked_softmax, masked_softmax_backward, Gradients};
use crate::scalar::Scalar;

use super::{HtiModel, WordPooling};

/// Activations of one review through the convolution stack.
#[derive(Debug, Clone)]
pub struct EncodedReview<S> {
    pub mask: Vec<bool>,
    pub emb: Vec<S>,
    pub hidden: Vec<S>,
    /// `len × k` word vectors c_i.
    pub words: Vec<S>,
}

impl<S: Scalar> EncodedReview<S> {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }
}

/// Pooled review vector with what the backward pass needs.
#[derive(Debug, Clone)]
pub struct PooledReview<S> {
    pub rep: Vec<S>,
    /// Per-position weights (attention or uniform); empty for max pooling.
    pub weights: Vec<S>,
    /// Winning position per coordinate for max pooling.
    pub argmax: Vec<usize>,
    /// False when every position was masked; `rep` is then zero.
    pub valid: bool,
}

fn zero_masked_rows<S: Scalar>(buf: &mut [S], width: usize, mask: &[bool]) {
    for (j, &m) in mask.iter().enumerate() {
        if !m {
            buf[j * width..(j + 1) * width].iter_mut().for_each(|x| *x = S::zero());
        }
    }
}

/// Word vectors for one padded review.
pub fn encode_words<S: Scalar>(model: &HtiModel<S>, tokens: &[u32], mask: &[bool]) -> EncodedReview<S> {
    let cfg = &model.config;
    let len = mask.iter().rposition(|&m| m).map_or(0, |j| j + 1);
    let mask = mask[..len].to_vec();
    let dim = cfg.embed_dim;
    let table = model.p(model.ids.embedding);
    let mut emb = vec![S::zero(); len * dim];
    for (j, (&t, &m)) in tokens.iter().zip(&mask).enumerate() {
        if m {
            let t = t as usize;
            emb[j * dim..(j + 1) * dim].copy_from_slice(&table[t * dim..(t + 1) * dim]);
        }
    }

    let w1 = cfg.conv1_width();
    let mut hidden = vec![S::zero(); len * w1];
    for (b, (g, &(wid, bid))) in cfg.conv1_geoms().into_iter().zip(&model.ids.conv1).enumerate() {
        conv1d_same(
            g,
            &emb,
            len,
            model.p(wid),
            model.p(bid),
            &mut hidden,
            w1,
            b * cfg.conv1_maps,
        );
    }
    hidden.iter_mut().for_each(|x| *x = relu(*x));
    zero_masked_rows(&mut hidden, w1, &mask);

    let k = cfg.latent_dim;
    let mut words = vec![S::zero(); len * k];
    let (wid, bid) = model.ids.conv2;
    conv1d_same(
        cfg.conv2_geom(),
        &hidden,
        len,
        model.p(wid),
        model.p(bid),
        &mut words,
        k,
        0,
    );
    words.iter_mut().for_each(|x| *x = relu(*x));
    zero_masked_rows(&mut words, k, &mask);

    EncodedReview {
        mask,
        emb,
        hidden,
        words,
    }
}

/// Backward through the convolution stack into the conv weights and the
/// embedding rows of the review's tokens.
pub fn encode_words_backward<S: Scalar>(
    model: &HtiModel<S>,
    tokens: &[u32],
    enc: &EncodedReview<S>,
    dwords: &[S],
    grads: &mut Gradients<S>,
) {
    let cfg = &model.config;
    let len = enc.len();
    if len == 0 {
        return;
    }
    let k = cfg.latent_dim;
    let w1 = cfg.conv1_width();
    let dim = cfg.embed_dim;

    let dpre2: Vec<S> = dwords
        .iter()
        .zip(&enc.words)
        .map(|(&g, &y)| if y > S::zero() { g } else { S::zero() })
        .collect();
    let mut dhidden = vec![S::zero(); len * w1];
    let (wid, bid) = model.ids.conv2;
    {
        let (dw, db) = grads.pair_mut(wid, bid);
        conv1d_same_backward(
            cfg.conv2_geom(),
            &enc.hidden,
            len,
            model.p(wid),
            &dpre2,
            k,
            0,
            Some(&mut dhidden),
            dw,
            db,
        );
    }
    for (g, &y) in dhidden.iter_mut().zip(&enc.hidden) {
        if y <= S::zero() {
            *g = S::zero();
        }
    }

    let mut demb = vec![S::zero(); len * dim];
    for (b, (g, &(wid, bid))) in cfg.conv1_geoms().into_iter().zip(&model.ids.conv1).enumerate() {
        let (dw, db) = grads.pair_mut(wid, bid);
        conv1d_same_backward(
            g,
            &enc.emb,
            len,
            model.p(wid),
            &dhidden,
            w1,
            b * cfg.conv1_maps,
            Some(&mut demb),
            dw,
            db,
        );
    }

    let dtable = grads.get_mut(model.ids.embedding);
    for (j, (&t, &m)) in tokens.iter().zip(&enc.mask).enumerate() {
        if m && t != 0 {
            let t = t as usize;
            ops::axpy(
                S::one(),
                &demb[j * dim..(j + 1) * dim],
                &mut dtable[t * dim..(t + 1) * dim],
            );
        }
    }
}

/// Pair-specific attention query `m = tanh(Wᵀ[u; v] + b)`.
pub fn attention_query<S: Scalar>(model: &HtiModel<S>, u: &[S], v: &[S]) -> Vec<S> {
    let mut m = model.p(model.ids.word_att_b).to_vec();
    let uv: Vec<S> = u.iter().chain(v).copied().collect();
    ops::vec_mat(&uv, model.p(model.ids.word_att_w), &mut m);
    m.iter_mut().for_each(|x| *x = x.tanh());
    m
}

/// Backward of [`attention_query`] given the output `m` and `dm`; returns
/// gradients for `u` and `v`.
pub fn attention_query_backward<S: Scalar>(
    model: &HtiModel<S>,
    u: &[S],
    v: &[S],
    m: &[S],
    dm: &[S],
    grads: &mut Gradients<S>,
) -> (Vec<S>, Vec<S>) {
    let dpre: Vec<S> = m.iter().zip(dm).map(|(&y, &g)| g * (S::one() - y * y)).collect();
    let uv: Vec<S> = u.iter().chain(v).copied().collect();
    let mut duv = vec![S::zero(); uv.len()];
    ops::vec_mat_backward(
        &uv,
        model.p(model.ids.word_att_w),
        &dpre,
        Some(&mut duv),
        grads.get_mut(model.ids.word_att_w),
    );
    ops::axpy(S::one(), &dpre, grads.get_mut(model.ids.word_att_b));
    let dv = duv.split_off(u.len());
    (duv, dv)
}

/// Summarizes word vectors into a review vector.
///
/// Attention weights are `masked_softmax(mᵀc_i)`; with `force_uniform`
/// they are replaced by `1 / #unmasked`, which is exactly the mean-pooling
/// path.
pub fn pool_words<S: Scalar>(
    pooling: WordPooling,
    words: &[S],
    mask: &[bool],
    k: usize,
    query: &[S],
    force_uniform: bool,
) -> PooledReview<S> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return PooledReview {
            rep: vec![S::zero(); k],
            weights: vec![S::zero(); mask.len()],
            argmax: Vec::new(),
            valid: false,
        };
    }
    match pooling {
        WordPooling::Max => {
            let mut rep = vec![S::neg_infinity(); k];
            let mut argmax = vec![0usize; k];
            for (j, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                for (c, r) in rep.iter_mut().enumerate() {
                    let x = words[j * k + c];
                    if x > *r {
                        *r = x;
                        argmax[c] = j;
                    }
                }
            }
            PooledReview {
                rep,
                weights: Vec::new(),
                argmax,
                valid: true,
            }
        }
        WordPooling::Mean | WordPooling::Attention => {
            let weights = if pooling == WordPooling::Mean || force_uniform {
                uniform_weights(mask, count)
            } else {
                let scores: Vec<S> = (0..mask.len())
                    .map(|j| ops::dot(query, &words[j * k..(j + 1) * k]))
                    .collect();
                masked_softmax(&scores, mask)
            };
            let mut rep = vec![S::zero(); k];
            ops::weighted_sum(&weights, words, &mut rep);
            PooledReview {
                rep,
                weights,
                argmax: Vec::new(),
                valid: true,
            }
        }
    }
}

pub(crate) fn uniform_weights<S: Scalar>(mask: &[bool], count: usize) -> Vec<S> {
    let w = S::one() / S::from_usize(count).unwrap();
    mask.iter().map(|&m| if m { w } else { S::zero() }).collect()
}

/// Backward of [`pool_words`]: accumulates into `dwords` and `dquery`.
#[allow(clippy::too_many_arguments)]
pub fn pool_words_backward<S: Scalar>(
    pooling: WordPooling,
    words: &[S],
    k: usize,
    query: &[S],
    pooled: &PooledReview<S>,
    force_uniform: bool,
    drep: &[S],
    dwords: &mut [S],
    dquery: &mut [S],
) {
    if !pooled.valid {
        return;
    }
    match pooling {
        WordPooling::Max => {
            for (c, &j) in pooled.argmax.iter().enumerate() {
                dwords[j * k + c] += drep[c];
            }
        }
        WordPooling::Mean | WordPooling::Attention => {
            let n = pooled.weights.len();
            for (j, &a) in pooled.weights.iter().enumerate() {
                if a != S::zero() {
                    ops::axpy(a, drep, &mut dwords[j * k..(j + 1) * k]);
                }
            }
            if pooling == WordPooling::Attention && !force_uniform {
                let dalpha: Vec<S> = (0..n).map(|j| ops::dot(drep, &words[j * k..(j + 1) * k])).collect();
                let dscore = masked_softmax_backward(&pooled.weights, &dalpha);
                for (j, &g) in dscore.iter().enumerate() {
                    if g != S::zero() {
                        ops::axpy(g, query, &mut dwords[j * k..(j + 1) * k]);
                        ops::axpy(g, &words[j * k..(j + 1) * k], dquery);
                    }
                }
            }
        }
    }
}
