//! Generator for small review corpora with a planted rating structure.
//!
//! Each item has a quality per aspect and each user a preference over
//! aspects. Ratings follow biases plus preference-weighted quality, and the
//! review text mentions the aspects the user cares about with a sentiment
//! word that matches the item's quality on that aspect. Text therefore
//! carries signal about both sides.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::RawRecord;

const ASPECTS: [&[&str]; 4] = [
    &["tone", "sound", "pickup", "output"],
    &["build", "body", "finish", "hardware"],
    &["price", "value", "cost", "deal"],
    &["strap", "neck", "grip", "comfort"],
];
const POSITIVE: &[&str] = &["great", "excellent", "solid", "love", "perfect", "sturdy"];
const NEGATIVE: &[&str] = &["poor", "cheap", "broken", "disappointing", "flimsy", "noisy"];
const FILLER: &[&str] = &[
    "guitar", "bought", "amp", "cable", "really", "works", "used", "play", "stage", "home",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub words_per_review: usize,
    /// Standard deviation of the rating noise before rounding.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_users: 40,
            n_items: 30,
            n_ratings: 400,
            words_per_review: 12,
            noise: 0.3,
            seed: 0,
        }
    }
}

/// Generates records in ascending timestamp order. Users are visited round
/// robin so every user gets about `n_ratings / n_users` reviews; each
/// (user, item) pair occurs at most once, so `n_ratings` is capped at
/// `n_users · n_items`.
pub fn generate(spec: &SyntheticSpec) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let n_aspects = ASPECTS.len();
    let prefs: Vec<Vec<f64>> = (0..spec.n_users)
        .map(|_| {
            let raw: Vec<f64> = (0..n_aspects).map(|_| rng.random::<f64>().powi(2) + 0.05).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        })
        .collect();
    let user_bias: Vec<f64> = (0..spec.n_users).map(|_| 0.4 * unit.sample(&mut rng)).collect();
    let quality: Vec<Vec<f64>> = (0..spec.n_items)
        .map(|_| (0..n_aspects).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let item_bias: Vec<f64> = (0..spec.n_items).map(|_| 0.4 * unit.sample(&mut rng)).collect();

    let total = spec.n_ratings.min(spec.n_users * spec.n_items);
    let mut seen = BTreeSet::new();
    let mut records = Vec::with_capacity(total);
    let mut r = 0usize;
    while records.len() < total {
        let user = r % spec.n_users;
        r += 1;
        let item = loop {
            let candidate = rng.random_range(0..spec.n_items);
            if !seen.contains(&(user, candidate)) {
                break candidate;
            }
            if (0..spec.n_items).all(|i| seen.contains(&(user, i))) {
                break usize::MAX;
            }
        };
        if item == usize::MAX {
            continue;
        }
        seen.insert((user, item));
        let fit: f64 = prefs[user].iter().zip(&quality[item]).map(|(w, q)| w * q).sum();
        let latent = 3.8 + user_bias[user] + item_bias[item] + 1.2 * fit + spec.noise * unit.sample(&mut rng);
        let rating = latent.round().clamp(1.0, 5.0);

        let mut words = Vec::with_capacity(spec.words_per_review);
        while words.len() < spec.words_per_review {
            if rng.random::<f64>() < 0.3 {
                words.push(*FILLER.choose(&mut rng).unwrap());
                continue;
            }
            let aspect = pick_weighted(&prefs[user], &mut rng);
            words.push(*ASPECTS[aspect].choose(&mut rng).unwrap());
            let positive = quality[item][aspect] + 0.3 * unit.sample(&mut rng) > 0.0;
            let bank = if positive { POSITIVE } else { NEGATIVE };
            words.push(*bank.choose(&mut rng).unwrap());
        }
        words.truncate(spec.words_per_review);
        records.push(RawRecord {
            user_id: format!("U{user:04}"),
            item_id: format!("I{item:04}"),
            rating,
            review_text: words.join(" "),
            timestamp: Some(1_300_000_000 + records.len() as i64 * 3600),
        });
    }
    records
}

fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let mut x = rng.random::<f64>();
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}
