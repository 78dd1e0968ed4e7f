#![allow(dead_code)]

pub mod invariants;
pub mod oracle;

use hti::corpus::synthetic::{generate, SyntheticSpec};
use hti::corpus::{ingest_reviews, Corpus, ExampleBuilder, PaddingLimits, PreprocessConfig, Split, TrainingExample};
use hti::model::{HtiModel, ModelConfig, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Corpus over every pair of a 4 × 4 user/item grid, padded to m = n = 3,
/// p = 8.
pub fn toy_corpus(seed: u64) -> Corpus {
    let spec = SyntheticSpec {
        n_users: 4,
        n_items: 4,
        n_ratings: 16,
        words_per_review: 10,
        noise: 0.3,
        seed,
    };
    let config = PreprocessConfig {
        seed,
        ..Default::default()
    };
    ingest_reviews(generate(&spec), &config)
        .unwrap()
        .with_padding(PaddingLimits {
            max_review_len: 8,
            max_user_reviews: 3,
            max_item_reviews: 3,
        })
}

pub fn toy_model(corpus: &Corpus, variant: Variant, seed: u64) -> HtiModel<f64> {
    let mut config = ModelConfig::for_corpus(corpus, 6, 3, 8);
    config.dropout = 0.0;
    config.variant = variant;
    HtiModel::new(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub fn examples(corpus: &Corpus, split: Split) -> Vec<TrainingExample> {
    let builder = ExampleBuilder::new(corpus);
    corpus
        .split_indices(split)
        .into_iter()
        .map(|i| builder.for_interaction(i))
        .collect()
}
