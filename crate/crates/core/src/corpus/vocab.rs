use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Token ids are dense in `[1, len]`; id 0 is the padding id and never maps
/// to a token.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Vocabulary {
    /// Keeps the `max_size` most frequent tokens. Ties break on the token
    /// string so the result does not depend on input order.
    pub fn from_counts<'a, I>(counts: I, max_size: usize) -> Self
    where
        I: IntoIterator<Item = (&'a str, usize)>,
    {
        let mut all: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        all.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        all.truncate(max_size);
        Self::from_tokens(all.into_iter().map(|(t, _)| t.to_string()).collect())
    }

    /// Token at position `i` receives id `i + 1`.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut v = Vocabulary {
            tokens,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 1))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        if id == 0 {
            return None;
        }
        self.tokens.get(id as usize - 1).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_v_frequency_cut() {
        let v = Vocabulary::from_counts([("c", 1), ("a", 5), ("b", 3)], 2);
        assert_eq!(v.id("a"), Some(1));
        assert_eq!(v.id("b"), Some(2));
        assert_eq!(v.id("c"), None);
        assert_eq!(v.token(0), None);
        assert_eq!(v.token(2), Some("b"));
    }

    #[test]
    fn ties_break_alphabetically() {
        let v = Vocabulary::from_counts([("z", 2), ("y", 2), ("x", 2)], 2);
        assert_eq!(v.tokens(), &["x".to_string(), "y".to_string()]);
    }
}
