use rand::Rng;

use crate::corpus::{ReviewGrid, TrainingExample};
use crate::error::Result;
use crate::numerics::ops;
use crate::numerics::Gradients;
use crate::scalar::Scalar;

use super::interaction::Aggregation;
use super::predictor::{combine, combine_backward, loss, MlpTrace};
use super::word_encoder::{
    attention_query, attention_query_backward, encode_words, encode_words_backward, pool_words, pool_words_backward,
    EncodedReview, PooledReview,
};
use super::HtiModel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Replace word attention weights by the uniform distribution over
    /// unmasked positions.
    pub force_uniform_word_attention: bool,
}

#[derive(Debug, Clone)]
pub struct ReviewTrace<S> {
    pub encoded: EncodedReview<S>,
    pub pooled: PooledReview<S>,
}

/// Every intermediate of one example's forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<S> {
    pub user: usize,
    pub item: usize,
    pub options: ForwardOptions,
    /// Word attention query `m`.
    pub query: Vec<S>,
    pub user_reviews: Vec<Option<ReviewTrace<S>>>,
    pub item_reviews: Vec<Option<ReviewTrace<S>>>,
    pub user_reps: Vec<S>,
    pub user_mask: Vec<bool>,
    pub item_reps: Vec<S>,
    pub item_mask: Vec<bool>,
    pub aggregation: Aggregation<S>,
    pub mlp: MlpTrace<S>,
    pub prediction: S,
}

impl<S: Scalar> HtiModel<S> {
    fn encode_grid(
        &self,
        grid: &ReviewGrid,
        query: &[S],
        opts: ForwardOptions,
    ) -> (Vec<Option<ReviewTrace<S>>>, Vec<S>, Vec<bool>) {
        let k = self.k();
        let pooling = self.config.variant.word_pooling();
        let mut reps = vec![S::zero(); grid.slots * k];
        let mut mask = vec![false; grid.slots];
        let traces = (0..grid.slots)
            .map(|slot| {
                if grid.lengths[slot] == 0 {
                    return None;
                }
                let encoded = encode_words(self, grid.review(slot), &grid.position_mask(slot));
                let pooled = pool_words(
                    pooling,
                    &encoded.words,
                    &encoded.mask,
                    k,
                    query,
                    opts.force_uniform_word_attention,
                );
                mask[slot] = pooled.valid;
                reps[slot * k..(slot + 1) * k].copy_from_slice(&pooled.rep);
                Some(ReviewTrace { encoded, pooled })
            })
            .collect();
        (traces, reps, mask)
    }

    /// Forward pass for one example. Dropout is active only when `rng` is
    /// `Some`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        ex: &TrainingExample,
        rng: Option<&mut R>,
        options: ForwardOptions,
    ) -> ForwardTrace<S> {
        let u = self.user_factor(ex.user);
        let v = self.item_factor(ex.item);
        let query = attention_query(self, u, v);
        let (user_reviews, user_reps, user_mask) = self.encode_grid(&ex.user_reviews, &query, options);
        let (item_reviews, item_reps, item_mask) = self.encode_grid(&ex.item_reviews, &query, options);
        let aggregation = self.aggregate(&user_reps, &user_mask, &item_reps, &item_mask);
        let h0 = combine(u, aggregation.d_user(), v, aggregation.d_item()).expect("widths fixed by config");
        let mlp = self.predict_from_h0(h0, rng);
        ForwardTrace {
            user: ex.user,
            item: ex.item,
            options,
            query,
            user_reviews,
            item_reviews,
            user_reps,
            user_mask,
            item_reps,
            item_mask,
            prediction: mlp.output,
            aggregation,
            mlp,
        }
    }

    /// Eval-mode prediction (raw, unclipped).
    pub fn predict(&self, ex: &TrainingExample) -> S {
        self.forward::<rand_chacha::ChaCha8Rng>(ex, None, ForwardOptions::default())
            .prediction
    }

    /// Accumulates `dprediction · ∂prediction/∂θ` into `grads`.
    pub fn backward(&self, ex: &TrainingExample, trace: &ForwardTrace<S>, dprediction: S, grads: &mut Gradients<S>) {
        let k = self.k();
        let dh0 = self.predict_backward(&trace.mlp, dprediction, grads);
        let (dx, dy) = combine_backward(&trace.mlp.h0, &dh0);

        let mut duser_reps = vec![S::zero(); trace.user_reps.len()];
        let mut ditem_reps = vec![S::zero(); trace.item_reps.len()];
        self.aggregate_backward(
            &trace.aggregation,
            &trace.user_reps,
            &trace.item_reps,
            &dx,
            &dy,
            grads,
            &mut duser_reps,
            &mut ditem_reps,
        );

        let mut dquery = vec![S::zero(); k];
        let pooling = self.config.variant.word_pooling();
        let force = trace.options.force_uniform_word_attention;
        for (grid, traces, dreps) in [
            (&ex.user_reviews, &trace.user_reviews, &duser_reps),
            (&ex.item_reviews, &trace.item_reviews, &ditem_reps),
        ] {
            for (slot, rt) in traces.iter().enumerate() {
                let Some(rt) = rt else { continue };
                let drep = &dreps[slot * k..(slot + 1) * k];
                if drep.iter().all(|&g| g == S::zero()) {
                    continue;
                }
                let mut dwords = vec![S::zero(); rt.encoded.words.len()];
                pool_words_backward(
                    pooling,
                    &rt.encoded.words,
                    k,
                    &trace.query,
                    &rt.pooled,
                    force,
                    drep,
                    &mut dwords,
                    &mut dquery,
                );
                encode_words_backward(self, grid.review(slot), &rt.encoded, &dwords, grads);
            }
        }

        let u = self.user_factor(ex.user).to_vec();
        let v = self.item_factor(ex.item).to_vec();
        let (du_q, dv_q) = attention_query_backward(self, &u, &v, &trace.query, &dquery, grads);
        let uf = grads.get_mut(self.ids.user_factors);
        let row = &mut uf[ex.user * k..(ex.user + 1) * k];
        ops::axpy(S::one(), &dx, row);
        ops::axpy(S::one(), &du_q, row);
        let vf = grads.get_mut(self.ids.item_factors);
        let row = &mut vf[ex.item * k..(ex.item + 1) * k];
        ops::axpy(S::one(), &dy, row);
        ops::axpy(S::one(), &dv_q, row);
    }

    /// Regularized mean square loss over `examples` in eval mode (no
    /// dropout). When `grads` is given the gradient is accumulated into it.
    pub fn objective(&self, examples: &[TrainingExample], lambda: S, grads: Option<&mut Gradients<S>>) -> Result<S> {
        let traces: Vec<ForwardTrace<S>> = examples
            .iter()
            .map(|ex| self.forward::<rand_chacha::ChaCha8Rng>(ex, None, ForwardOptions::default()))
            .collect();
        let preds: Vec<S> = traces.iter().map(|t| t.prediction).collect();
        let targets: Vec<S> = examples.iter().map(|ex| S::from_f64_lossy(ex.rating)).collect();
        let value = loss(&preds, &targets, &self.tape, lambda)?;
        if let Some(grads) = grads {
            let n = S::from_usize(examples.len().max(1)).unwrap();
            for ((ex, tr), &r) in examples.iter().zip(&traces).zip(&targets) {
                let d = (tr.prediction - r) * S::from_f64_lossy(2.0) / n;
                self.backward(ex, tr, d, grads);
            }
            self.tape.add_l2_grad(lambda, grads);
        }
        Ok(value)
    }
}
