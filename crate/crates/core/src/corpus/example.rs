use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use super::{Corpus, Split};

/// `slots × max_len` token grid. Slot `k` holds `lengths[k]` tokens left
/// aligned; every other position is the padding id 0. A slot with length
/// 0 is an invalid (masked) review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewGrid {
    pub slots: usize,
    pub max_len: usize,
    pub tokens: Vec<u32>,
    pub lengths: Vec<usize>,
    /// Interaction index each slot was taken from.
    pub sources: Vec<Option<usize>>,
}

impl ReviewGrid {
    pub fn empty(slots: usize, max_len: usize) -> Self {
        ReviewGrid {
            slots,
            max_len,
            tokens: vec![0; slots * max_len],
            lengths: vec![0; slots],
            sources: vec![None; slots],
        }
    }

    /// Fills the next free slot with `tokens`, truncated to `max_len`.
    fn push(&mut self, slot: usize, tokens: &[u32], source: usize) {
        let n = tokens.len().min(self.max_len);
        self.tokens[slot * self.max_len..slot * self.max_len + n].copy_from_slice(&tokens[..n]);
        self.lengths[slot] = n;
        self.sources[slot] = Some(source);
    }

    pub fn review(&self, slot: usize) -> &[u32] {
        &self.tokens[slot * self.max_len..(slot + 1) * self.max_len]
    }

    pub fn review_mask(&self) -> Vec<bool> {
        self.lengths.iter().map(|&l| l > 0).collect()
    }

    pub fn position_mask(&self, slot: usize) -> Vec<bool> {
        (0..self.max_len).map(|j| j < self.lengths[slot]).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.lengths.iter().filter(|&&l| l > 0).count()
    }

    /// Reorders slots; `perm[new] = old`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = ReviewGrid::empty(self.slots, self.max_len);
        for (new, &old) in perm.iter().enumerate() {
            out.tokens[new * self.max_len..(new + 1) * self.max_len].copy_from_slice(self.review(old));
            out.lengths[new] = self.lengths[old];
            out.sources[new] = self.sources[old];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub user_reviews: ReviewGrid,
    pub item_reviews: ReviewGrid,
}

impl TrainingExample {
    /// True when neither grid holds a review written by `user` about `item`.
    pub fn excludes_target(&self, corpus: &Corpus) -> bool {
        self.user_reviews
            .sources
            .iter()
            .chain(&self.item_reviews.sources)
            .flatten()
            .all(|&i| {
                let it = &corpus.interactions[i];
                (it.user, it.item) != (self.user, self.item)
            })
    }
}

/// Per-user and per-item training reviews ordered most recent first, for
/// repeated example assembly.
#[derive(Debug, Clone)]
pub struct ExampleBuilder<'a> {
    corpus: &'a Corpus,
    by_user: Vec<Vec<usize>>,
    by_item: Vec<Vec<usize>>,
}

impl<'a> ExampleBuilder<'a> {
    pub fn new(corpus: &'a Corpus) -> Self {
        let mut by_user = vec![Vec::new(); corpus.n_users()];
        let mut by_item = vec![Vec::new(); corpus.n_items()];
        for (idx, it) in corpus.interactions.iter().enumerate() {
            if it.split == Split::Train && !it.tokens.is_empty() {
                by_user[it.user].push(idx);
                by_item[it.item].push(idx);
            }
        }
        // most recent first; without timestamps, corpus order
        let key = |&i: &usize| (Reverse(corpus.interactions[i].timestamp.unwrap_or(i64::MIN)), i);
        for list in by_user.iter_mut().chain(by_item.iter_mut()) {
            list.sort_by_key(key);
        }
        ExampleBuilder {
            corpus,
            by_user,
            by_item,
        }
    }

    pub fn corpus(&self) -> &'a Corpus {
        self.corpus
    }

    /// Assembles the example for interaction `idx` of the corpus.
    pub fn for_interaction(&self, idx: usize) -> TrainingExample {
        let it = &self.corpus.interactions[idx];
        self.assemble(it.user, it.item, it.rating)
    }

    /// User grid: the user's most recent training reviews excluding any
    /// about `item`. Item grid: symmetric, excluding reviews by `user`.
    pub fn assemble(&self, user: usize, item: usize, rating: f64) -> TrainingExample {
        let pad = self.corpus.padding;
        let interactions = &self.corpus.interactions;
        let fill = |list: &[usize], slots: usize, skip: &dyn Fn(usize) -> bool| {
            let mut grid = ReviewGrid::empty(slots, pad.max_review_len);
            for (slot, &idx) in list.iter().filter(|&&i| !skip(i)).take(slots).enumerate() {
                grid.push(slot, &interactions[idx].tokens, idx);
            }
            grid
        };
        let user_reviews = fill(
            self.by_user.get(user).map_or(&[][..], Vec::as_slice),
            pad.max_user_reviews,
            &|i| interactions[i].item == item,
        );
        let item_reviews = fill(
            self.by_item.get(item).map_or(&[][..], Vec::as_slice),
            pad.max_item_reviews,
            &|i| interactions[i].user == user,
        );
        TrainingExample {
            user,
            item,
            rating,
            user_reviews,
            item_reviews,
        }
    }
}

/// One-shot assembly; prefer [`ExampleBuilder`] in loops.
pub fn assemble_example(corpus: &Corpus, user: usize, item: usize, rating: f64) -> TrainingExample {
    ExampleBuilder::new(corpus).assemble(user, item, rating)
}
