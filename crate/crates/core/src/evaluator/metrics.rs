use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ExampleBuilder, Split, TrainingExample};
use crate::error::{HtiError, Result};
use crate::model::HtiModel;
use crate::scalar::Scalar;

pub const RATING_MIN: f64 = 1.0;
pub const RATING_MAX: f64 = 5.0;

pub fn clip_rating(x: f64) -> f64 {
    x.clamp(RATING_MIN, RATING_MAX)
}

/// MAE and RMSE of clipped predictions. Empty input gives `(0, 0)`.
pub fn mae_rmse(predictions: &[f64], targets: &[f64]) -> (f64, f64) {
    if predictions.is_empty() {
        return (0.0, 0.0);
    }
    let n = predictions.len() as f64;
    let (abs, sq) = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &r)| clip_rating(p) - r)
        .fold((0.0, 0.0), |(a, s), e| (a + e.abs(), s + e * e));
    (abs / n, (sq / n).sqrt())
}

/// One train/evaluate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub mae: f64,
    pub rmse: f64,
    pub n_examples: usize,
    pub train_seconds: f64,
    pub test_seconds: f64,
}

/// Metrics of one or more runs; top-level values are means over `runs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub mae: f64,
    pub rmse: f64,
    pub n_examples: usize,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub runs: Vec<RunMetrics>,
}

impl MetricsReport {
    pub fn from_runs(name: impl Into<String>, runs: Vec<RunMetrics>) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = |f: fn(&RunMetrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
        MetricsReport {
            name: name.into(),
            mae: mean(|r| r.mae),
            rmse: mean(|r| r.rmse),
            n_examples: runs.first().map_or(0, |r| r.n_examples),
            train_seconds: mean(|r| r.train_seconds),
            test_seconds: mean(|r| r.test_seconds),
            runs,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Eval-mode raw predictions, in input order.
pub fn predict_examples<S: Scalar>(model: &HtiModel<S>, examples: &[TrainingExample]) -> Vec<f64> {
    examples.par_iter().map(|ex| model.predict(ex).as_f64()).collect()
}

pub fn split_examples(corpus: &Corpus, split: Split) -> Vec<TrainingExample> {
    let builder = ExampleBuilder::new(corpus);
    corpus
        .split_indices(split)
        .into_iter()
        .map(|i| builder.for_interaction(i))
        .collect()
}

/// MAE/RMSE of `model` on `examples`.
pub fn evaluate_examples<S: Scalar>(
    model: &HtiModel<S>,
    examples: &[TrainingExample],
    seed: u64,
) -> Result<RunMetrics> {
    if examples.is_empty() {
        return Err(HtiError::data("evaluation split is empty"));
    }
    let start = std::time::Instant::now();
    let preds = predict_examples(model, examples);
    if let Some(p) = preds.iter().find(|p| !p.is_finite()) {
        return Err(HtiError::numerical(format!(
            "non-finite prediction {p} during evaluation"
        )));
    }
    let targets: Vec<f64> = examples.iter().map(|e| e.rating).collect();
    let (mae, rmse) = mae_rmse(&preds, &targets);
    Ok(RunMetrics {
        seed,
        mae,
        rmse,
        n_examples: examples.len(),
        train_seconds: 0.0,
        test_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Evaluates on one split of the corpus.
pub fn evaluate<S: Scalar>(model: &HtiModel<S>, corpus: &Corpus, split: Split) -> Result<MetricsReport> {
    let run = evaluate_examples(model, &split_examples(corpus, split), corpus.seed)?;
    Ok(MetricsReport::from_runs(model.config.variant.name(), vec![run]))
}
