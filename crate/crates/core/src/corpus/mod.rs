//! Review ingestion, vocabulary, padding limits, splitting and
//! leave-target-review-out example assembly.

mod example;
mod record;
pub mod synthetic;
pub mod text;
mod vocab;

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HtiError, Result};

pub use example::{assemble_example, ExampleBuilder, ReviewGrid, TrainingExample};
pub use record::{read_records, RawRecord, RecordBatch};
pub use vocab::Vocabulary;

/// Version tag embedded in serialized corpus files.
pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    /// Left out when the training ratio is below 0.8; neither trained on
    /// nor evaluated, and its review is not visible to any example.
    Unused,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    /// Training fraction with the fixed 10% validation and test shares.
    pub fn with_train(train: f64) -> Self {
        SplitRatios {
            train,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.train, self.val, self.test]
            .iter()
            .all(|&r| r > 0.0 && r.is_finite());
        if !ok || self.train + self.val + self.test > 1.0 + 1e-9 {
            return Err(HtiError::config(format!(
                "split ratios must be positive and sum to at most 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    #[serde(default = "text::default_stopwords")]
    pub stopwords: Vec<String>,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    #[serde(default)]
    pub ratios: SplitRatios,
    #[serde(default)]
    pub seed: u64,
}

fn default_vocab_size() -> usize {
    20_000
}

fn default_quantile() -> f64 {
    0.9
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            stopwords: text::default_stopwords(),
            vocab_size: default_vocab_size(),
            quantile: default_quantile(),
            ratios: SplitRatios::default(),
            seed: 0,
        }
    }
}

/// Review length cap and per-user / per-item review-count caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddingLimits {
    pub max_review_len: usize,
    pub max_user_reviews: usize,
    pub max_item_reviews: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: Option<i64>,
    /// Normalized review text as ids into [`Corpus::lexicon`].
    pub text: Vec<u32>,
    /// Vocabulary ids (1-based) of the in-vocabulary tokens of `text`.
    pub tokens: Vec<u32>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub format_version: u32,
    pub users: Vec<String>,
    pub items: Vec<String>,
    /// Every normalized token seen during ingestion, in order of first use.
    pub lexicon: Vec<String>,
    pub interactions: Vec<Interaction>,
    pub vocabulary: Vocabulary,
    pub padding: PaddingLimits,
    pub quantile: f64,
    pub vocab_size: usize,
    pub seed: u64,
}

/// Dataset summary with the columns used for the usual dataset tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub docs_per_user: f64,
    pub docs_per_item: f64,
    pub words_per_doc: f64,
    pub density: f64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub vocabulary: usize,
    pub padding: PaddingLimits,
}

/// Smallest value covering fraction `q` of `values`: the `ceil(q·n)`-th
/// order statistic (1-based), never below 1.
pub fn quantile_cover(values: &[usize], q: f64) -> usize {
    if values.is_empty() {
        return 1;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1].max(1)
}

/// Builds a corpus from raw records: normalizes text, indexes users and
/// items, splits, then derives vocabulary and padding limits from the
/// training split.
pub fn ingest_reviews<I>(records: I, config: &PreprocessConfig) -> Result<Corpus>
where
    I: IntoIterator<Item = RawRecord>,
{
    let stopwords: BTreeSet<String> = config.stopwords.iter().map(|s| s.to_lowercase()).collect();
    let mut users = Indexer::default();
    let mut items = Indexer::default();
    let mut lexicon = Indexer::default();
    let mut interactions = Vec::new();
    let mut skipped = 0usize;
    for rec in records {
        if let Err(why) = rec.validate() {
            warn!("skipping record: {why}");
            skipped += 1;
            continue;
        }
        let text = text::normalize(&rec.review_text, &stopwords)
            .into_iter()
            .map(|t| lexicon.id(t) as u32)
            .collect();
        interactions.push(Interaction {
            user: users.id(rec.user_id),
            item: items.id(rec.item_id),
            rating: rec.rating,
            timestamp: rec.timestamp,
            text,
            tokens: Vec::new(),
            split: Split::Train,
        });
    }
    if interactions.is_empty() {
        return Err(HtiError::data("corpus is empty"));
    }
    if skipped > 0 {
        warn!("{skipped} invalid records skipped");
    }
    let corpus = Corpus {
        format_version: CORPUS_FORMAT_VERSION,
        users: users.names,
        items: items.names,
        lexicon: lexicon.names,
        interactions,
        vocabulary: Vocabulary::default(),
        padding: PaddingLimits {
            max_review_len: 1,
            max_user_reviews: 1,
            max_item_reviews: 1,
        },
        quantile: config.quantile,
        vocab_size: config.vocab_size,
        seed: config.seed,
    };
    split_dataset(corpus, config.ratios, config.seed)
}

/// Randomly reassigns splits and rebuilds the training-derived vocabulary
/// and padding limits. Deterministic given `seed`.
pub fn split_dataset(mut corpus: Corpus, ratios: SplitRatios, seed: u64) -> Result<Corpus> {
    ratios.validate()?;
    let n = corpus.interactions.len();
    if n < 3 {
        return Err(HtiError::data(format!(
            "need at least 3 interactions to split, got {n}"
        )));
    }
    let n_test = ((ratios.test * n as f64).round() as usize).max(1);
    let n_val = ((ratios.val * n as f64).round() as usize).max(1);
    let n_train = ((ratios.train * n as f64).round() as usize).min(n - n_val - n_test);
    if n_train == 0 {
        return Err(HtiError::data("training split would be empty"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (rank, &idx) in order.iter().enumerate() {
        corpus.interactions[idx].split = if rank < n_test {
            Split::Test
        } else if rank < n_test + n_val {
            Split::Val
        } else if rank < n_test + n_val + n_train {
            Split::Train
        } else {
            Split::Unused
        };
    }
    corpus.seed = seed;
    corpus.rebuild_vocabulary();
    corpus.warn_cold();
    Ok(corpus)
}

#[derive(Default)]
struct Indexer {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Indexer {
    fn id(&mut self, name: String) -> usize {
        if let Some(&id) = self.ids.get(&name) {
            return id;
        }
        let id = self.names.len();
        self.ids.insert(name.clone(), id);
        self.names.push(name);
        id
    }
}

impl Corpus {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.interactions
            .iter()
            .enumerate()
            .filter(|(_, it)| it.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.users.iter().position(|u| u == id)
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|v| v == id)
    }

    /// Finds the interaction for a (user, item) pair, if any.
    pub fn find_pair(&self, user: usize, item: usize) -> Option<usize> {
        self.interactions
            .iter()
            .position(|it| it.user == user && it.item == item)
    }

    /// Recomputes vocabulary, per-interaction token ids and padding limits
    /// from the current training split.
    fn rebuild_vocabulary(&mut self) {
        let mut counts = vec![0usize; self.lexicon.len()];
        for it in self.interactions.iter().filter(|it| it.split == Split::Train) {
            for &t in &it.text {
                counts[t as usize] += 1;
            }
        }
        self.vocabulary = Vocabulary::from_counts(
            self.lexicon.iter().map(String::as_str).zip(counts.iter().copied()),
            self.vocab_size,
        );
        let remap: Vec<u32> = self
            .lexicon
            .iter()
            .map(|t| self.vocabulary.id(t).unwrap_or(0))
            .collect();
        for it in &mut self.interactions {
            it.tokens = it
                .text
                .iter()
                .map(|&t| remap[t as usize])
                .filter(|&id| id != 0)
                .collect();
        }
        self.padding = self.compute_padding();
        info!(
            "vocabulary {} tokens, padding {:?}",
            self.vocabulary.len(),
            self.padding
        );
    }

    fn compute_padding(&self) -> PaddingLimits {
        let train: Vec<&Interaction> = self.interactions.iter().filter(|it| it.split == Split::Train).collect();
        let lengths: Vec<usize> = train.iter().map(|it| it.tokens.len()).collect();
        let mut per_user = vec![0usize; self.users.len()];
        let mut per_item = vec![0usize; self.items.len()];
        for it in &train {
            per_user[it.user] += 1;
            per_item[it.item] += 1;
        }
        per_user.retain(|&c| c > 0);
        per_item.retain(|&c| c > 0);
        PaddingLimits {
            max_review_len: quantile_cover(&lengths, self.quantile),
            max_user_reviews: quantile_cover(&per_user, self.quantile),
            max_item_reviews: quantile_cover(&per_item, self.quantile),
        }
    }

    fn warn_cold(&self) {
        let mut seen_u = vec![false; self.users.len()];
        let mut seen_i = vec![false; self.items.len()];
        for it in self.interactions.iter().filter(|it| it.split == Split::Train) {
            seen_u[it.user] = true;
            seen_i[it.item] = true;
        }
        let cold = self
            .interactions
            .iter()
            .filter(|it| matches!(it.split, Split::Val | Split::Test))
            .filter(|it| !seen_u[it.user] || !seen_i[it.item])
            .count();
        if cold > 0 {
            warn!("{cold} evaluation interactions involve a user or item absent from training");
        }
    }

    /// Overrides the padding limits, e.g. to bound compute at desk scale.
    pub fn with_padding(mut self, padding: PaddingLimits) -> Self {
        self.padding = padding;
        self
    }

    pub fn stats(&self) -> CorpusStats {
        let ratings = self.interactions.len();
        let words: usize = self.interactions.iter().map(|it| it.tokens.len()).sum();
        let count = |s| self.interactions.iter().filter(|it| it.split == s).count();
        CorpusStats {
            users: self.users.len(),
            items: self.items.len(),
            ratings,
            docs_per_user: ratings as f64 / self.users.len() as f64,
            docs_per_item: ratings as f64 / self.items.len() as f64,
            words_per_doc: words as f64 / ratings as f64,
            density: ratings as f64 / (self.users.len() as f64 * self.items.len() as f64),
            train: count(Split::Train),
            val: count(Split::Val),
            test: count(Split::Test),
            vocabulary: self.vocabulary.len(),
            padding: self.padding,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut c: Corpus = serde_json::from_str(text)?;
        c.finish_load()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c: Corpus = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        c.finish_load()?;
        Ok(c)
    }

    fn finish_load(&mut self) -> Result<()> {
        if self.format_version != CORPUS_FORMAT_VERSION {
            return Err(HtiError::format(format!(
                "corpus format version {} (expected {})",
                self.format_version, CORPUS_FORMAT_VERSION
            )));
        }
        self.vocabulary.rebuild_index();
        let v = self.vocabulary.len() as u32;
        let bad = self.interactions.iter().any(|it| {
            it.user >= self.users.len() || it.item >= self.items.len() || it.tokens.iter().any(|&t| t == 0 || t > v)
        });
        if bad {
            return Err(HtiError::format("corpus references out-of-range ids"));
        }
        Ok(())
    }
}
