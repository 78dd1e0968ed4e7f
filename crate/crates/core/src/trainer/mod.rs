//! Mini-batch training with Adam, validation-based early stopping and a
//! regularization-strength search.

mod adam;

use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split, TrainingExample};
use crate::error::{HtiError, Result};
use crate::evaluator::{evaluate_examples, split_examples};
use crate::model::{ForwardOptions, HtiModel, ModelConfig, Variant};
use crate::numerics::Gradients;
use crate::scalar::Scalar;

pub use adam::{adam_step, AdamConfig, AdamState};

/// Examples per gradient chunk. Chunks are reduced in a fixed order, so
/// results do not depend on the number of worker threads.
const CHUNK: usize = 16;

pub const LAMBDA_GRID: [f64; 4] = [1e-6, 1e-5, 1e-4, 1e-3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub dropout: f64,
    pub embed_dim: usize,
    /// Feature maps per first-layer kernel size.
    pub conv1_maps: usize,
    pub latent_dim: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Global gradient norm cap; 0 disables clipping.
    pub grad_clip: f64,
    pub variant: Variant,
    /// Whitespace-separated `token v1 … v_dim` file used to initialize word
    /// embeddings; random initialization when absent.
    pub embeddings: Option<PathBuf>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            batch_size: 128,
            learning_rate: 1e-4,
            lambda: 1e-5,
            dropout: 0.5,
            embed_dim: 100,
            conv1_maps: 100,
            latent_dim: 32,
            max_epochs: 50,
            patience: 10,
            seed: 0,
            grad_clip: 5.0,
            variant: Variant::Full,
            embeddings: None,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(HtiError::config("batch_size, max_epochs and patience must be positive"));
        }
        if [self.learning_rate, self.lambda, self.grad_clip]
            .iter()
            .any(|v| v.is_nan() || *v < 0.0)
        {
            return Err(HtiError::config(
                "learning_rate, lambda and grad_clip must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn model_config(&self, corpus: &Corpus) -> ModelConfig {
        let mut c = ModelConfig::for_corpus(corpus, self.embed_dim, self.conv1_maps, self.latent_dim);
        c.dropout = self.dropout;
        c.variant = self.variant;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    Diverged(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the returned parameters; 0 means the initial model.
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stop: StopReason,
}

impl TrainingLog {
    /// One JSON object per epoch, newline terminated.
    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S: Scalar> {
    /// Parameters with the best validation MAE.
    pub model: HtiModel<S>,
    pub log: TrainingLog,
}

fn mean_train_rating(corpus: &Corpus) -> f64 {
    let train = corpus.split_indices(Split::Train);
    train.iter().map(|&i| corpus.interactions[i].rating).sum::<f64>() / train.len().max(1) as f64
}

/// Random initial model with the output bias set to the mean training
/// rating and, if configured, pretrained word embeddings.
pub fn init_model<S: Scalar>(corpus: &Corpus, hp: &HyperParams) -> Result<HtiModel<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut model = HtiModel::new(hp.model_config(corpus), &mut rng)?;
    if let Some(path) = &hp.embeddings {
        let hits = model.load_pretrained_embeddings(path, &corpus.vocabulary)?;
        info!(
            "initialized {hits} of {} word embeddings from {}",
            corpus.vocabulary.len(),
            path.display()
        );
    }
    model.set_output_bias(S::from_f64_lossy(mean_train_rating(corpus)));
    Ok(model)
}

pub fn train<S: Scalar>(corpus: &Corpus, hp: &HyperParams) -> Result<TrainOutcome<S>> {
    let model = init_model(corpus, hp)?;
    fit(model, corpus, hp, &mut |_| {})
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_seed(seed: u64, epoch: usize, position: usize) -> u64 {
    mix(mix(mix(seed) ^ epoch as u64) ^ position as u64)
}

/// Sum of squared errors and the gradient of `Σ (r̂ − r)² / scale` over
/// `batch` with dropout active. `offset` is the batch's position in the
/// epoch, used to seed per-example dropout.
fn batch_gradient<S: Scalar>(
    model: &HtiModel<S>,
    batch: &[&TrainingExample],
    scale: S,
    seed: u64,
    epoch: usize,
    offset: usize,
) -> (Gradients<S>, f64) {
    let two = S::from_f64_lossy(2.0);
    let parts: Vec<(Gradients<S>, f64)> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grads = model.tape.new_gradients();
            let mut sse = 0.0;
            for (j, ex) in chunk.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, epoch, offset + c * CHUNK + j));
                let trace = model.forward(ex, Some(&mut rng), ForwardOptions::default());
                let err = trace.prediction - S::from_f64_lossy(ex.rating);
                sse += (err * err).as_f64();
                model.backward(ex, &trace, two * err / scale, &mut grads);
            }
            (grads, sse)
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut total, mut sse) = iter.next().expect("non-empty batch");
    for (g, s) in iter {
        total.add(&g);
        sse += s;
    }
    (total, sse)
}

/// Trains `model` in place of a fresh initialization. `on_epoch` sees each
/// epoch record as soon as it is complete. Divergence (a non-finite loss or
/// gradient) stops training and returns the best parameters so far with
/// [`StopReason::Diverged`].
pub fn fit<S: Scalar>(
    mut model: HtiModel<S>,
    corpus: &Corpus,
    hp: &HyperParams,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome<S>> {
    hp.validate()?;
    let train = split_examples(corpus, Split::Train);
    let val = split_examples(corpus, Split::Val);
    if train.is_empty() || val.is_empty() {
        return Err(HtiError::data("training needs non-empty train and validation splits"));
    }
    let mut adam = AdamState::new(&model.tape, AdamConfig::default());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = model.clone();
    let mut best_mae = evaluate_examples(&model, &val, hp.seed)?.mae;
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    let lambda = S::from_f64_lossy(hp.lambda);
    let start = Instant::now();

    'epochs: for epoch in 1..=hp.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(hp.seed, epoch, usize::MAX));
        order.shuffle(&mut rng);
        if let Some(&first) = order.first() {
            if !train[first].excludes_target(corpus) {
                return Err(HtiError::data("training example contains its own target review"));
            }
        }
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(hp.batch_size).enumerate() {
            let batch: Vec<&TrainingExample> = idx.iter().map(|&i| &train[i]).collect();
            let n = S::from_usize(batch.len()).unwrap();
            let (mut grads, sse) = batch_gradient(&model, &batch, n, hp.seed, epoch, b * hp.batch_size);
            let loss = sse / batch.len() as f64 + hp.lambda * model.tape.l2().as_f64();
            model.tape.add_l2_grad(lambda, &mut grads);
            if !loss.is_finite() || !grads.all_finite() {
                let why = format!("non-finite loss or gradient at epoch {epoch}, batch {b}");
                warn!("{why}; keeping epoch {best_epoch} parameters");
                stop = StopReason::Diverged(why);
                break 'epochs;
            }
            if hp.grad_clip > 0.0 {
                let norm = grads.global_norm().as_f64();
                if norm > hp.grad_clip {
                    grads.scale(S::from_f64_lossy(hp.grad_clip / norm));
                }
            }
            adam_step(&mut model.tape, &grads, &mut adam, hp.learning_rate);
            loss_sum += loss * batch.len() as f64;
        }
        let metrics = match evaluate_examples(&model, &val, hp.seed) {
            Ok(m) => m,
            Err(HtiError::Numerical(why)) => {
                stop = StopReason::Diverged(why);
                break;
            }
            Err(e) => return Err(e),
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_mae: metrics.mae,
            val_rmse: metrics.rmse,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: train loss {:.4}, val MAE {:.4}, RMSE {:.4}",
            record.train_loss, record.val_mae, record.val_rmse
        );
        on_epoch(&record);
        epochs.push(record);
        if metrics.mae < best_mae {
            best_mae = metrics.mae;
            best_epoch = epoch;
            best = model.clone();
        } else if epoch - best_epoch >= hp.patience {
            stop = StopReason::EarlyStop;
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        log: TrainingLog {
            epochs,
            best_epoch,
            best_val_mae: best_mae,
            stop,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub val_mae: f64,
}

/// Trains once per candidate and returns the scores with the best λ
/// (lowest validation MAE; ties go to the smaller λ).
pub fn search_lambda<S: Scalar>(corpus: &Corpus, hp: &HyperParams, grid: &[f64]) -> Result<(f64, Vec<LambdaScore>)> {
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let run = HyperParams { lambda, ..hp.clone() };
        let out = train::<S>(corpus, &run)?;
        info!("lambda {lambda:e}: val MAE {:.4}", out.log.best_val_mae);
        scores.push(LambdaScore {
            lambda,
            val_mae: out.log.best_val_mae,
        });
    }
    let best = scores
        .iter()
        .min_by(|a, b| a.val_mae.total_cmp(&b.val_mae).then(a.lambda.total_cmp(&b.lambda)))
        .map(|s| s.lambda)
        .ok_or_else(|| HtiError::config("empty lambda grid"))?;
    Ok((best, scores))
}
