//! Global-mean and user/item bias predictors used as sanity floors.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::error::{HtiError, Result};
use crate::evaluator::{clip_rating, mae_rmse, MetricsReport, RunMetrics};

/// `r̂ = clip(μ + b_u + b_v)`. User biases are mean residuals after μ;
/// item biases are mean residuals after μ + b_u. Users and items without
/// training ratings get bias 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasModel {
    pub mean: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
}

fn group_means(n: usize, pairs: impl Iterator<Item = (usize, f64)>) -> Vec<f64> {
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (g, x) in pairs {
        sum[g] += x;
        count[g] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

impl BiasModel {
    pub fn fit(corpus: &Corpus) -> Result<Self> {
        let train: Vec<_> = corpus
            .split_indices(Split::Train)
            .into_iter()
            .map(|i| &corpus.interactions[i])
            .collect();
        if train.is_empty() {
            return Err(HtiError::data("bias model needs a non-empty training split"));
        }
        let mean = train.iter().map(|it| it.rating).sum::<f64>() / train.len() as f64;
        let user_bias = group_means(corpus.n_users(), train.iter().map(|it| (it.user, it.rating - mean)));
        let item_bias = group_means(
            corpus.n_items(),
            train.iter().map(|it| (it.item, it.rating - mean - user_bias[it.user])),
        );
        Ok(BiasModel {
            mean,
            user_bias,
            item_bias,
        })
    }

    /// The global-mean predictor: all biases zero.
    pub fn global_mean_only(&self) -> Self {
        BiasModel {
            mean: self.mean,
            user_bias: vec![0.0; self.user_bias.len()],
            item_bias: vec![0.0; self.item_bias.len()],
        }
    }

    pub fn predict(&self, user: usize, item: usize) -> f64 {
        let bu = self.user_bias.get(user).copied().unwrap_or(0.0);
        let bv = self.item_bias.get(item).copied().unwrap_or(0.0);
        clip_rating(self.mean + bu + bv)
    }

    pub fn evaluate(&self, corpus: &Corpus, split: Split) -> Result<RunMetrics> {
        let idx = corpus.split_indices(split);
        if idx.is_empty() {
            return Err(HtiError::data("evaluation split is empty"));
        }
        let (preds, targets): (Vec<f64>, Vec<f64>) = idx
            .iter()
            .map(|&i| {
                let it = &corpus.interactions[i];
                (self.predict(it.user, it.item), it.rating)
            })
            .unzip();
        let (mae, rmse) = mae_rmse(&preds, &targets);
        Ok(RunMetrics {
            seed: corpus.seed,
            mae,
            rmse,
            n_examples: idx.len(),
            train_seconds: 0.0,
            test_seconds: 0.0,
        })
    }
}

/// Fits on the training split and reports test metrics.
pub fn fit_and_evaluate(corpus: &Corpus) -> Result<MetricsReport> {
    let model = BiasModel::fit(corpus)?;
    Ok(MetricsReport::from_runs(
        "bias",
        vec![model.evaluate(corpus, Split::Test)?],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_reviews, split_dataset, PreprocessConfig, RawRecord, SplitRatios};

    fn corpus_of(ratings: &[(usize, usize, f64)]) -> Corpus {
        let records = ratings.iter().map(|&(u, i, r)| RawRecord {
            user_id: format!("u{u}"),
            item_id: format!("i{i}"),
            rating: r,
            review_text: "fine".into(),
            timestamp: None,
        });
        ingest_reviews(records, &PreprocessConfig::default()).unwrap()
    }

    #[test]
    fn constant_ratings_give_zero_error() {
        let c = corpus_of(&(0..20).map(|k| (k % 4, k / 4, 4.0)).collect::<Vec<_>>());
        let r = fit_and_evaluate(&c).unwrap();
        assert_eq!((r.mae, r.rmse), (0.0, 0.0));
    }

    #[test]
    fn global_mean_of_extremes() {
        let mut c = corpus_of(&[(0, 0, 1.0), (1, 1, 5.0), (2, 2, 3.0)]);
        for (it, split) in c.interactions.iter_mut().zip([Split::Train, Split::Train, Split::Test]) {
            it.split = split;
        }
        let m = BiasModel::fit(&c).unwrap();
        assert_eq!(m.mean, 3.0);
        // user 2 and item 2 are unseen in training
        assert_eq!(m.user_bias[2], 0.0);
        assert_eq!(m.item_bias[2], 0.0);
        assert_eq!(m.evaluate(&c, Split::Test).unwrap().mae, 0.0);
    }

    #[test]
    fn biases_recover_additive_structure() {
        let mut rows = Vec::new();
        for u in 0..5 {
            for i in 0..5 {
                rows.push((u, i, 1.0 + u as f64 * 0.5 + i as f64 * 0.25));
            }
        }
        let c = split_dataset(corpus_of(&rows), SplitRatios::default(), 3).unwrap();
        let m = BiasModel::fit(&c).unwrap();
        assert!(m.mean.is_finite() && m.user_bias.iter().chain(&m.item_bias).all(|b| b.is_finite()));
        let bias = m.evaluate(&c, Split::Train).unwrap();
        let flat = m.global_mean_only().evaluate(&c, Split::Train).unwrap();
        assert!(bias.mae < flat.mae);
    }
}
