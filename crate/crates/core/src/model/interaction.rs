//! Review-level interaction between a user's and an item's review vectors.
//!
//! Pipeline: pairwise Euclidean distances, min-pooled distance attention
//! for the initial representations `p`/`q`, cross-guided attention for
//! the intermediate representations `s`/`t`, and a shared sigmoid gate
//! blending the two into `d_i`/`d_j`.

use serde::{Deserialize, Serialize};

use crate::numerics::ops::{self, euclidean, euclidean_backward, sigmoid};
use crate::numerics::{masked_softmax, masked_softmax_backward, Gradients};
use crate::scalar::Scalar;

use super::word_encoder::{pool_words, pool_words_backward, PooledReview};
use super::{HtiModel, ReviewPooling, WordPooling};

/// Attention parameters for one side: `γ = vᵀ tanh(W_guideᵀ g + W_reviewᵀ d + b)`.
#[derive(Debug, Clone, Copy)]
pub struct SideWeights<'a, S> {
    pub guide_w: &'a [S],
    pub review_w: &'a [S],
    pub score_v: &'a [S],
    pub bias: &'a [S],
}

#[derive(Debug, Clone, Copy)]
pub struct GateWeights<'a, S> {
    pub initial_w: &'a [S],
    pub intermediate_w: &'a [S],
    pub bias: &'a [S],
}

/// `m × n` distances; pairs involving an invalid review hold `+∞`.
pub fn pairwise_distances<S: Scalar>(
    user: &[S],
    user_mask: &[bool],
    item: &[S],
    item_mask: &[bool],
    k: usize,
) -> Vec<S> {
    let (m, n) = (user_mask.len(), item_mask.len());
    let mut e = vec![S::infinity(); m * n];
    for a in (0..m).filter(|&a| user_mask[a]) {
        for b in (0..n).filter(|&b| item_mask[b]) {
            e[a * n + b] = euclidean(&user[a * k..(a + 1) * k], &item[b * k..(b + 1) * k]);
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Initial<S> {
    pub p: Vec<S>,
    pub q: Vec<S>,
    pub delta_user: Vec<S>,
    pub delta_item: Vec<S>,
    /// Row minima `a`; 0 when the item side has no valid review.
    pub user_min: Vec<S>,
    pub user_argmin: Vec<Option<usize>>,
    /// Column minima `b`; 0 when the user side has no valid review.
    pub item_min: Vec<S>,
    pub item_argmin: Vec<Option<usize>>,
}

/// Min-pooled distance attention: `δ = softmax(−min distance)` over valid
/// reviews and the weighted sums `p`, `q`.
pub fn initial_representations<S: Scalar>(
    user: &[S],
    user_mask: &[bool],
    item: &[S],
    item_mask: &[bool],
    dist: &[S],
    k: usize,
) -> Initial<S> {
    let (m, n) = (user_mask.len(), item_mask.len());
    let mut user_min = vec![S::zero(); m];
    let mut user_argmin = vec![None; m];
    let mut item_min = vec![S::zero(); n];
    let mut item_argmin = vec![None; n];
    for a in (0..m).filter(|&a| user_mask[a]) {
        let mut best = S::infinity();
        for b in (0..n).filter(|&b| item_mask[b]) {
            if dist[a * n + b] < best {
                best = dist[a * n + b];
                user_argmin[a] = Some(b);
            }
        }
        if user_argmin[a].is_some() {
            user_min[a] = best;
        }
    }
    for b in (0..n).filter(|&b| item_mask[b]) {
        let mut best = S::infinity();
        for a in (0..m).filter(|&a| user_mask[a]) {
            if dist[a * n + b] < best {
                best = dist[a * n + b];
                item_argmin[b] = Some(a);
            }
        }
        if item_argmin[b].is_some() {
            item_min[b] = best;
        }
    }
    let neg_a: Vec<S> = user_min.iter().map(|&x| -x).collect();
    let neg_b: Vec<S> = item_min.iter().map(|&x| -x).collect();
    let delta_user = masked_softmax(&neg_a, user_mask);
    let delta_item = masked_softmax(&neg_b, item_mask);
    let mut p = vec![S::zero(); k];
    let mut q = vec![S::zero(); k];
    ops::weighted_sum(&delta_user, user, &mut p);
    ops::weighted_sum(&delta_item, item, &mut q);
    Initial {
        p,
        q,
        delta_user,
        delta_item,
        user_min,
        user_argmin,
        item_min,
        item_argmin,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intermediate<S> {
    pub s: Vec<S>,
    pub beta: Vec<S>,
    /// `tanh` activations per review, `len × k`.
    pub hidden: Vec<S>,
}

/// Guide-conditioned attention over one side's reviews.
pub fn intermediate_representation<S: Scalar>(
    guide: &[S],
    reps: &[S],
    mask: &[bool],
    w: SideWeights<'_, S>,
    k: usize,
) -> Intermediate<S> {
    let len = mask.len();
    let mut base = w.bias.to_vec();
    ops::vec_mat(guide, w.guide_w, &mut base);
    let mut hidden = vec![S::zero(); len * k];
    let mut gamma = vec![S::zero(); len];
    for r in (0..len).filter(|&r| mask[r]) {
        let h = &mut hidden[r * k..(r + 1) * k];
        h.copy_from_slice(&base);
        ops::vec_mat(&reps[r * k..(r + 1) * k], w.review_w, h);
        h.iter_mut().for_each(|x| *x = x.tanh());
        gamma[r] = ops::dot(w.score_v, h);
    }
    let beta = masked_softmax(&gamma, mask);
    let mut s = vec![S::zero(); k];
    ops::weighted_sum(&beta, reps, &mut s);
    Intermediate { s, beta, hidden }
}

/// `g = σ(W₁ᵀ initial + W₂ᵀ intermediate + b)`; returns
/// `(g ⊙ initial + (1 − g) ⊙ intermediate, g)`.
pub fn gate_fuse<S: Scalar>(initial: &[S], intermediate: &[S], w: GateWeights<'_, S>) -> (Vec<S>, Vec<S>) {
    let mut z = w.bias.to_vec();
    ops::vec_mat(initial, w.initial_w, &mut z);
    ops::vec_mat(intermediate, w.intermediate_w, &mut z);
    let g: Vec<S> = z.into_iter().map(sigmoid).collect();
    let out = g
        .iter()
        .zip(initial.iter().zip(intermediate))
        .map(|(&g, (&a, &b))| g * a + (S::one() - g) * b)
        .collect();
    (out, g)
}

/// Everything the interaction pass computed for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTrace<S> {
    pub k: usize,
    pub distances: Vec<S>,
    pub initial: Initial<S>,
    pub user_inter: Intermediate<S>,
    pub item_inter: Intermediate<S>,
    pub gate_user: Vec<S>,
    pub gate_item: Vec<S>,
    pub d_user: Vec<S>,
    pub d_item: Vec<S>,
}

impl<S: Scalar> InteractionTrace<S> {
    /// Scalar weight of each user review in `d_i`: the gate-averaged mix
    /// of `δ` and `β`. Sums to 1 over valid reviews.
    pub fn effective_user_weights(&self) -> Vec<S> {
        effective(&self.gate_user, &self.initial.delta_user, &self.user_inter.beta)
    }

    pub fn effective_item_weights(&self) -> Vec<S> {
        effective(&self.gate_item, &self.initial.delta_item, &self.item_inter.beta)
    }
}

fn effective<S: Scalar>(gate: &[S], delta: &[S], beta: &[S]) -> Vec<S> {
    let gbar = gate.iter().copied().sum::<S>() / S::from_usize(gate.len()).unwrap();
    delta
        .iter()
        .zip(beta)
        .map(|(&d, &b)| gbar * d + (S::one() - gbar) * b)
        .collect()
}

/// Review-level aggregation result for either the interaction network or
/// one of the pooling ablations.
#[derive(Debug, Clone)]
pub enum Aggregation<S> {
    Interaction(Box<InteractionTrace<S>>),
    Pooled {
        user: PooledReview<S>,
        item: PooledReview<S>,
    },
}

impl<S: Scalar> Aggregation<S> {
    pub fn d_user(&self) -> &[S] {
        match self {
            Aggregation::Interaction(t) => &t.d_user,
            Aggregation::Pooled { user, .. } => &user.rep,
        }
    }

    pub fn d_item(&self) -> &[S] {
        match self {
            Aggregation::Interaction(t) => &t.d_item,
            Aggregation::Pooled { item, .. } => &item.rep,
        }
    }
}

impl<S: Scalar> HtiModel<S> {
    pub fn user_side_weights(&self) -> SideWeights<'_, S> {
        SideWeights {
            guide_w: self.p(self.ids.int_wu),
            review_w: self.p(self.ids.int_wvu),
            score_v: self.p(self.ids.int_v1),
            bias: self.p(self.ids.int_bu),
        }
    }

    pub fn item_side_weights(&self) -> SideWeights<'_, S> {
        SideWeights {
            guide_w: self.p(self.ids.int_wv),
            review_w: self.p(self.ids.int_wuv),
            score_v: self.p(self.ids.int_v2),
            bias: self.p(self.ids.int_bv),
        }
    }

    pub fn gate_weights(&self) -> GateWeights<'_, S> {
        GateWeights {
            initial_w: self.p(self.ids.gate_w1),
            intermediate_w: self.p(self.ids.gate_w2),
            bias: self.p(self.ids.gate_b),
        }
    }

    /// Full interaction pass over `m × k` user and `n × k` item review
    /// vectors.
    pub fn interact(&self, user: &[S], user_mask: &[bool], item: &[S], item_mask: &[bool]) -> InteractionTrace<S> {
        let k = self.k();
        let distances = pairwise_distances(user, user_mask, item, item_mask, k);
        let initial = initial_representations(user, user_mask, item, item_mask, &distances, k);
        let user_inter = intermediate_representation(&initial.q, user, user_mask, self.user_side_weights(), k);
        let item_inter = intermediate_representation(&initial.p, item, item_mask, self.item_side_weights(), k);
        let (d_user, gate_user) = gate_fuse(&initial.p, &user_inter.s, self.gate_weights());
        let (d_item, gate_item) = gate_fuse(&initial.q, &item_inter.s, self.gate_weights());
        InteractionTrace {
            k,
            distances,
            initial,
            user_inter,
            item_inter,
            gate_user,
            gate_item,
            d_user,
            d_item,
        }
    }

    /// Aggregates both sides according to the model variant.
    pub fn aggregate(&self, user: &[S], user_mask: &[bool], item: &[S], item_mask: &[bool]) -> Aggregation<S> {
        let k = self.k();
        let pool = |kind| Aggregation::Pooled {
            user: pool_words(kind, user, user_mask, k, &[], false),
            item: pool_words(kind, item, item_mask, k, &[], false),
        };
        match self.config.variant.review_pooling() {
            ReviewPooling::Interaction => {
                Aggregation::Interaction(Box::new(self.interact(user, user_mask, item, item_mask)))
            }
            ReviewPooling::Mean => pool(WordPooling::Mean),
            ReviewPooling::Max => pool(WordPooling::Max),
        }
    }

    /// Backward of [`HtiModel::aggregate`]; accumulates into the review
    /// vector gradients `duser` (`m × k`) and `ditem` (`n × k`).
    #[allow(clippy::too_many_arguments)]
    pub fn aggregate_backward(
        &self,
        agg: &Aggregation<S>,
        user: &[S],
        item: &[S],
        dd_user: &[S],
        dd_item: &[S],
        grads: &mut Gradients<S>,
        duser: &mut [S],
        ditem: &mut [S],
    ) {
        let k = self.k();
        match agg {
            Aggregation::Pooled { user: pu, item: pi } => {
                let kind = match self.config.variant.review_pooling() {
                    ReviewPooling::Max => WordPooling::Max,
                    _ => WordPooling::Mean,
                };
                let mut unused = [];
                pool_words_backward(kind, user, k, &[], pu, false, dd_user, duser, &mut unused);
                pool_words_backward(kind, item, k, &[], pi, false, dd_item, ditem, &mut unused);
            }
            Aggregation::Interaction(t) => self.interact_backward(t, user, item, dd_user, dd_item, grads, duser, ditem),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn interact_backward(
        &self,
        t: &InteractionTrace<S>,
        user: &[S],
        item: &[S],
        dd_user: &[S],
        dd_item: &[S],
        grads: &mut Gradients<S>,
        duser: &mut [S],
        ditem: &mut [S],
    ) {
        let k = self.k();
        let init = &t.initial;
        let mut dp = vec![S::zero(); k];
        let mut dq = vec![S::zero(); k];
        let mut ds = vec![S::zero(); k];
        let mut dt = vec![S::zero(); k];

        self.gate_backward(&init.p, &t.user_inter.s, &t.gate_user, dd_user, grads, &mut dp, &mut ds);
        self.gate_backward(&init.q, &t.item_inter.s, &t.gate_item, dd_item, grads, &mut dq, &mut dt);

        let ids = &self.ids;
        side_backward(
            self.user_side_weights(),
            (ids.int_wu, ids.int_wvu, ids.int_v1, ids.int_bu),
            &init.q,
            user,
            &t.user_inter,
            &ds,
            k,
            grads,
            duser,
            &mut dq,
        );
        side_backward(
            self.item_side_weights(),
            (ids.int_wv, ids.int_wuv, ids.int_v2, ids.int_bv),
            &init.p,
            item,
            &t.item_inter,
            &dt,
            k,
            grads,
            ditem,
            &mut dp,
        );

        initial_backward(init, &t.distances, user, item, &dp, &dq, k, duser, ditem);
    }

    #[allow(clippy::too_many_arguments)]
    fn gate_backward(
        &self,
        initial: &[S],
        intermediate: &[S],
        g: &[S],
        dout: &[S],
        grads: &mut Gradients<S>,
        dinitial: &mut [S],
        dintermediate: &mut [S],
    ) {
        let k = g.len();
        let mut dz = vec![S::zero(); k];
        for c in 0..k {
            dinitial[c] += g[c] * dout[c];
            dintermediate[c] += (S::one() - g[c]) * dout[c];
            dz[c] = dout[c] * (initial[c] - intermediate[c]) * g[c] * (S::one() - g[c]);
        }
        let ids = &self.ids;
        ops::vec_mat_backward(
            initial,
            self.p(ids.gate_w1),
            &dz,
            Some(dinitial),
            grads.get_mut(ids.gate_w1),
        );
        ops::vec_mat_backward(
            intermediate,
            self.p(ids.gate_w2),
            &dz,
            Some(dintermediate),
            grads.get_mut(ids.gate_w2),
        );
        ops::axpy(S::one(), &dz, grads.get_mut(ids.gate_b));
    }
}

type SideIds = (
    crate::numerics::ParamId,
    crate::numerics::ParamId,
    crate::numerics::ParamId,
    crate::numerics::ParamId,
);

#[allow(clippy::too_many_arguments)]
fn side_backward<S: Scalar>(
    w: SideWeights<'_, S>,
    (guide_id, review_id, score_id, bias_id): SideIds,
    guide: &[S],
    reps: &[S],
    inter: &Intermediate<S>,
    ds: &[S],
    k: usize,
    grads: &mut Gradients<S>,
    dreps: &mut [S],
    dguide: &mut [S],
) {
    let len = inter.beta.len();
    let dbeta: Vec<S> = (0..len).map(|r| ops::dot(ds, &reps[r * k..(r + 1) * k])).collect();
    for (r, &b) in inter.beta.iter().enumerate() {
        if b != S::zero() {
            ops::axpy(b, ds, &mut dreps[r * k..(r + 1) * k]);
        }
    }
    let dgamma = masked_softmax_backward(&inter.beta, &dbeta);
    let mut dpre_sum = vec![S::zero(); k];
    let mut dpre = vec![S::zero(); k];
    for (r, &dg) in dgamma.iter().enumerate() {
        if inter.beta[r] == S::zero() {
            continue;
        }
        let h = &inter.hidden[r * k..(r + 1) * k];
        ops::axpy(dg, h, grads.get_mut(score_id));
        for c in 0..k {
            dpre[c] = dg * w.score_v[c] * (S::one() - h[c] * h[c]);
        }
        ops::vec_mat_backward(
            &reps[r * k..(r + 1) * k],
            w.review_w,
            &dpre,
            Some(&mut dreps[r * k..(r + 1) * k]),
            grads.get_mut(review_id),
        );
        ops::axpy(S::one(), &dpre, &mut dpre_sum);
    }
    ops::axpy(S::one(), &dpre_sum, grads.get_mut(bias_id));
    ops::vec_mat_backward(guide, w.guide_w, &dpre_sum, Some(dguide), grads.get_mut(guide_id));
}

#[allow(clippy::too_many_arguments)]
fn initial_backward<S: Scalar>(
    init: &Initial<S>,
    dist: &[S],
    user: &[S],
    item: &[S],
    dp: &[S],
    dq: &[S],
    k: usize,
    duser: &mut [S],
    ditem: &mut [S],
) {
    let (m, n) = (init.delta_user.len(), init.delta_item.len());
    let mut de = vec![S::zero(); m * n];

    let mut side = |delta: &[S], reps: &[S], dsum: &[S], dreps: &mut [S], argmin: &[Option<usize>], user_side: bool| {
        let ddelta: Vec<S> = (0..delta.len())
            .map(|r| ops::dot(dsum, &reps[r * k..(r + 1) * k]))
            .collect();
        for (r, &d) in delta.iter().enumerate() {
            if d != S::zero() {
                ops::axpy(d, dsum, &mut dreps[r * k..(r + 1) * k]);
            }
        }
        // scores are −min distance
        let dscore = masked_softmax_backward(delta, &ddelta);
        for (r, &g) in dscore.iter().enumerate() {
            if let Some(o) = argmin[r] {
                let idx = if user_side { r * n + o } else { o * n + r };
                de[idx] -= g;
            }
        }
    };
    side(&init.delta_user, user, dp, duser, &init.user_argmin, true);
    side(&init.delta_item, item, dq, ditem, &init.item_argmin, false);

    for a in 0..m {
        for b in 0..n {
            let g = de[a * n + b];
            if g != S::zero() {
                let (du, di) = (&mut duser[a * k..(a + 1) * k], &mut ditem[b * k..(b + 1) * k]);
                euclidean_backward(
                    &user[a * k..(a + 1) * k],
                    &item[b * k..(b + 1) * k],
                    dist[a * n + b],
                    g,
                    du,
                    di,
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn distance_identity_and_triangle() {
        let e = pairwise_distances(
            &[0.0f64, 0.0, 1.0, 1.0],
            &[true, true],
            &[3.0, 4.0, 1.0, 1.0],
            &[true, true],
            2,
        );
        assert_eq!(e, vec![5.0, 2f64.sqrt(), (4.0f64 + 9.0).sqrt(), 0.0]);
    }

    #[test]
    fn invalid_pairs_hold_sentinel() {
        let e = pairwise_distances(&[0.0f64, 1.0], &[true, false], &[2.0], &[true], 1);
        assert_eq!(e[0], 2.0);
        assert!(e[1].is_infinite());
    }

    #[test]
    fn random_three_by_two_against_loop() {
        let user = [0.3f64, -1.2, 0.7, 2.2, 0.0, -0.4];
        let item = [1.5f64, 0.5, -0.8, 0.9];
        let e = pairwise_distances(&user, &[true; 3], &item, &[true; 2], 2);
        for a in 0..3 {
            for b in 0..2 {
                let mut acc = 0.0;
                for c in 0..2 {
                    let d = user[a * 2 + c] - item[b * 2 + c];
                    acc += d * d;
                }
                assert_abs_diff_eq!(e[a * 2 + b], acc.sqrt(), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn single_user_review_gets_full_weight() {
        let user = [1.0f64, 2.0];
        let item = [0.0f64, 0.0, 5.0, 5.0];
        let d = pairwise_distances(&user, &[true], &item, &[true, true], 2);
        let init = initial_representations(&user, &[true], &item, &[true, true], &d, 2);
        assert_eq!(init.delta_user, vec![1.0]);
        assert_eq!(init.p, vec![1.0, 2.0]);
    }

    #[test]
    fn equal_minima_split_evenly() {
        let user = [1.0f64, -1.0];
        let item = [0.0f64];
        let d = pairwise_distances(&user, &[true, true], &item, &[true], 1);
        let init = initial_representations(&user, &[true, true], &item, &[true], &d, 1);
        assert_eq!(init.delta_user, vec![0.5, 0.5]);
    }

    #[test]
    fn minima_one_and_two() {
        // a = [1, 2]
        let user = [1.0f64, 2.0];
        let item = [0.0f64];
        let d = pairwise_distances(&user, &[true, true], &item, &[true], 1);
        let init = initial_representations(&user, &[true, true], &item, &[true], &d, 1);
        let (e1, e2) = ((-1.0f64).exp(), (-2.0f64).exp());
        assert_abs_diff_eq!(init.delta_user[0], e1 / (e1 + e2), epsilon = 1e-15);
        assert_abs_diff_eq!(init.delta_user[1], e2 / (e1 + e2), epsilon = 1e-15);
        assert_abs_diff_eq!(init.delta_user[0], 0.7311, epsilon = 1e-4);
    }

    #[test]
    fn empty_side_gets_zero_and_other_side_uniform() {
        let user = [1.0f64, 2.0, 3.0, 4.0];
        let item = [0.0f64, 0.0];
        let d = pairwise_distances(&user, &[true, true], &item, &[false], 2);
        let init = initial_representations(&user, &[true, true], &item, &[false], &d, 2);
        assert_eq!(init.q, vec![0.0, 0.0]);
        assert_eq!(init.delta_item, vec![0.0]);
        assert_eq!(init.delta_user, vec![0.5, 0.5]);
    }

    fn side<'a>(wg: &'a [f64], wr: &'a [f64], v: &'a [f64], b: &'a [f64]) -> SideWeights<'a, f64> {
        SideWeights {
            guide_w: wg,
            review_w: wr,
            score_v: v,
            bias: b,
        }
    }

    #[test]
    fn identical_reviews_intermediate_is_that_review() {
        let reps = [0.4f64, -0.3, 0.4, -0.3];
        let w = [0.3, 0.1, -0.2, 0.5];
        let r = intermediate_representation(
            &[1.0, 1.0],
            &reps,
            &[true, true],
            side(&w, &w, &[1.0, -1.0], &[0.0, 0.1]),
            2,
        );
        assert_abs_diff_eq!(r.s[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(r.s[1], -0.3, epsilon = 1e-15);
    }

    #[test]
    fn zero_review_weights_give_uniform_beta() {
        let reps = [1.0f64, 5.0, -2.0, 0.5, 3.0, 3.0];
        let wg = [0.3, 0.1, -0.2, 0.5];
        let r = intermediate_representation(
            &[1.0, -2.0],
            &reps,
            &[true, true, false],
            side(&wg, &[0.0; 4], &[1.0, 2.0], &[0.1, 0.1]),
            2,
        );
        assert_abs_diff_eq!(r.beta[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.beta[1], 0.5, epsilon = 1e-15);
        assert_eq!(r.beta[2], 0.0);
    }

    #[test]
    fn scalar_intermediate_case() {
        // k = 1: γ_r = v tanh(wg * g + wr * d_r + b)
        let (wg, wr, v, b, g) = (0.7f64, -1.3, 2.0, 0.2, 0.5);
        let reps = [0.4f64, 1.1];
        let r = intermediate_representation(&[g], &reps, &[true, true], side(&[wg], &[wr], &[v], &[b]), 1);
        let gam: Vec<f64> = reps.iter().map(|&d| v * (wg * g + wr * d + b).tanh()).collect();
        let z = gam[0].exp() + gam[1].exp();
        let beta = [gam[0].exp() / z, gam[1].exp() / z];
        assert_abs_diff_eq!(r.beta[0], beta[0], epsilon = 1e-15);
        assert_abs_diff_eq!(r.s[0], beta[0] * reps[0] + beta[1] * reps[1], epsilon = 1e-15);
    }

    #[test]
    fn gate_of_equal_inputs_is_identity() {
        let w = [0.5f64, -0.2, 0.9, 0.1];
        let (out, _) = gate_fuse(
            &[1.5, -2.0],
            &[1.5, -2.0],
            GateWeights {
                initial_w: &w,
                intermediate_w: &w,
                bias: &[0.3, 0.3],
            },
        );
        assert_abs_diff_eq!(out[0], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], -2.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_gate_weights_average() {
        let z = [0.0f64; 4];
        let (out, g) = gate_fuse(
            &[1.0, 4.0],
            &[3.0, 0.0],
            GateWeights {
                initial_w: &z,
                intermediate_w: &z,
                bias: &[0.0, 0.0],
            },
        );
        assert_eq!(g, vec![0.5, 0.5]);
        assert_eq!(out, vec![2.0, 2.0]);
    }

    #[test]
    fn scalar_gate_case() {
        let (p, s, w1, w2, b) = (2.0f64, 4.0, 0.25, -0.5, 0.1);
        let (out, g) = gate_fuse(
            &[p],
            &[s],
            GateWeights {
                initial_w: &[w1],
                intermediate_w: &[w2],
                bias: &[b],
            },
        );
        let gate = 1.0 / (1.0 + (-(w1 * p + w2 * s + b)).exp());
        assert_abs_diff_eq!(g[0], gate, epsilon = 1e-15);
        assert_abs_diff_eq!(out[0], gate * p + (1.0 - gate) * s, epsilon = 1e-15);
    }
}
