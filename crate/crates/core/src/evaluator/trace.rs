use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ExampleBuilder, ReviewGrid};
use crate::error::{HtiError, Result};
use crate::model::interaction::Aggregation;
use crate::model::word_encoder::PooledReview;
use crate::model::{ForwardOptions, HtiModel, ReviewTrace};
use crate::scalar::Scalar;

use super::clip_rating;

/// Position weights of a pooled vector. Attention and mean pooling report
/// their weights; max pooling reports the share of coordinates each
/// position wins.
pub fn pooled_weights<S: Scalar>(pooled: &PooledReview<S>, positions: usize) -> Vec<f64> {
    if !pooled.valid {
        return vec![0.0; positions];
    }
    if !pooled.weights.is_empty() {
        return pooled.weights.iter().map(|w| w.as_f64()).collect();
    }
    let mut w = vec![0.0; positions];
    let share = 1.0 / pooled.argmax.len() as f64;
    for &j in &pooled.argmax {
        w[j] += share;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewAttention {
    pub slot: usize,
    /// The other party of the review: the item for a user-side review, the
    /// user for an item-side review.
    pub counterpart: String,
    pub rating: f64,
    /// Distance-based initial weight; absent for pooling variants.
    pub initial_weight: Option<f64>,
    /// Cross-guided intermediate weight; absent for pooling variants.
    pub intermediate_weight: Option<f64>,
    /// Weight of the review in the side's aggregated vector.
    pub weight: f64,
    pub tokens: Vec<String>,
    pub word_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideAttention {
    /// Weights of every slot, valid or not, in slot order.
    pub weights: Vec<f64>,
    pub initial_weights: Option<Vec<f64>>,
    pub intermediate_weights: Option<Vec<f64>>,
    /// Highest-weighted reviews, best first.
    pub top: Vec<ReviewAttention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub user_id: String,
    pub item_id: String,
    pub variant: String,
    /// Raw model output.
    pub raw_prediction: f64,
    /// Output clipped to the rating scale.
    pub prediction: f64,
    /// Observed rating when the pair occurs in the corpus.
    pub rating: Option<f64>,
    pub user: SideAttention,
    pub item: SideAttention,
}

impl AttentionTrace {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn to_f64<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

#[allow(clippy::too_many_arguments)]
fn side(
    corpus: &Corpus,
    grid: &ReviewGrid,
    reviews: &[Option<ReviewTrace<impl Scalar>>],
    weights: Vec<f64>,
    initial: Option<Vec<f64>>,
    intermediate: Option<Vec<f64>>,
    user_side: bool,
    top_r: usize,
) -> SideAttention {
    let mut order: Vec<usize> = (0..grid.slots).filter(|&s| grid.lengths[s] > 0).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let top = order
        .into_iter()
        .take(top_r)
        .map(|slot| {
            let it = &corpus.interactions[grid.sources[slot].expect("valid slot has a source")];
            let counterpart = if user_side {
                corpus.items[it.item].clone()
            } else {
                corpus.users[it.user].clone()
            };
            let len = grid.lengths[slot];
            let tokens = grid.review(slot)[..len]
                .iter()
                .map(|&t| corpus.vocabulary.token(t).unwrap_or("").to_string())
                .collect();
            let rt = reviews[slot].as_ref().expect("valid slot was encoded");
            let mut word_weights = pooled_weights(&rt.pooled, rt.encoded.len());
            word_weights.resize(len, 0.0);
            ReviewAttention {
                slot,
                counterpart,
                rating: it.rating,
                initial_weight: initial.as_ref().map(|w| w[slot]),
                intermediate_weight: intermediate.as_ref().map(|w| w[slot]),
                weight: weights[slot],
                tokens,
                word_weights,
            }
        })
        .collect();
    SideAttention {
        weights,
        initial_weights: initial,
        intermediate_weights: intermediate,
        top,
    }
}

/// Word- and review-level attention for one (user, item) pair, with the
/// `top_r` highest-weighted reviews per side.
pub fn export_attention_trace<S: Scalar>(
    model: &HtiModel<S>,
    corpus: &Corpus,
    user_id: &str,
    item_id: &str,
    top_r: usize,
) -> Result<AttentionTrace> {
    let user = corpus
        .user_index(user_id)
        .ok_or_else(|| HtiError::data(format!("unknown user '{user_id}'")))?;
    let item = corpus
        .item_index(item_id)
        .ok_or_else(|| HtiError::data(format!("unknown item '{item_id}'")))?;
    let rating = corpus.find_pair(user, item).map(|i| corpus.interactions[i].rating);
    let ex = ExampleBuilder::new(corpus).assemble(user, item, rating.unwrap_or(f64::NAN));
    let tr = model.forward::<rand_chacha::ChaCha8Rng>(&ex, None, ForwardOptions::default());
    let (m, n) = (ex.user_reviews.slots, ex.item_reviews.slots);
    let (uw, iw, ui, ii, um, im) = match &tr.aggregation {
        Aggregation::Interaction(t) => (
            to_f64(&t.effective_user_weights()),
            to_f64(&t.effective_item_weights()),
            Some(to_f64(&t.initial.delta_user)),
            Some(to_f64(&t.initial.delta_item)),
            Some(to_f64(&t.user_inter.beta)),
            Some(to_f64(&t.item_inter.beta)),
        ),
        Aggregation::Pooled { user, item } => {
            (pooled_weights(user, m), pooled_weights(item, n), None, None, None, None)
        }
    };
    let raw = tr.prediction.as_f64();
    Ok(AttentionTrace {
        user_id: user_id.to_string(),
        item_id: item_id.to_string(),
        variant: model.config.variant.name().to_string(),
        raw_prediction: raw,
        prediction: clip_rating(raw),
        rating,
        user: side(corpus, &ex.user_reviews, &tr.user_reviews, uw, ui, um, true, top_r),
        item: side(corpus, &ex.item_reviews, &tr.item_reviews, iw, ii, im, false, top_r),
    })
}
