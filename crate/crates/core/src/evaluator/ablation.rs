use std::time::Instant;

use log::{info, warn};

use crate::corpus::{split_dataset, Corpus, Split, SplitRatios};
use crate::error::Result;
use crate::model::Variant;
use crate::scalar::Scalar;
use crate::trainer::{train, HyperParams, StopReason};

use super::{evaluate_examples, split_examples, MetricsReport};

/// Trains `variant` once per seed with otherwise identical settings and
/// reports test metrics. Every variant sees the same splits, initial seeds
/// and batch order.
pub fn run_ablation<S: Scalar>(
    variant: Variant,
    corpus: &Corpus,
    hp: &HyperParams,
    seeds: &[u64],
) -> Result<MetricsReport> {
    let test = split_examples(corpus, Split::Test);
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let run_hp = HyperParams {
            seed,
            variant,
            ..hp.clone()
        };
        let start = Instant::now();
        let out = train::<S>(corpus, &run_hp)?;
        let train_seconds = start.elapsed().as_secs_f64();
        if let StopReason::Diverged(why) = &out.log.stop {
            warn!(
                "{variant} seed {seed} diverged ({why}); evaluating epoch {}",
                out.log.best_epoch
            );
        }
        let mut metrics = evaluate_examples(&out.model, &test, seed)?;
        metrics.train_seconds = train_seconds;
        info!(
            "{variant} seed {seed}: test MAE {:.4} RMSE {:.4}",
            metrics.mae, metrics.rmse
        );
        runs.push(metrics);
    }
    Ok(MetricsReport::from_runs(variant.name(), runs))
}

/// Re-splits the corpus with each training ratio (validation and test stay
/// at their configured shares) and runs the full protocol on each.
pub fn ratio_sweep<S: Scalar>(
    corpus: &Corpus,
    ratios: &[f64],
    hp: &HyperParams,
    seeds: &[u64],
) -> Result<Vec<(f64, MetricsReport)>> {
    ratios
        .iter()
        .map(|&r| {
            let resplit = split_dataset(corpus.clone(), SplitRatios::with_train(r), corpus.seed)?;
            let mut report = run_ablation::<S>(hp.variant, &resplit, hp, seeds)?;
            report.name = format!("{}@{r}", hp.variant);
            Ok((r, report))
        })
        .collect()
}
