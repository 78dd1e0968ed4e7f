use std::collections::BTreeSet;

const DEFAULT_STOPWORDS: &str = include_str!("../../assets/stopwords_en.txt");

/// Parses a stopword list: one word per line, `#` comments and blank lines
/// ignored, entries lowercased.
pub fn parse_stopwords(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// The bundled English list.
pub fn default_stopwords() -> Vec<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

/// Lowercases, splits on whitespace and strips every non-alphanumeric
/// character from each piece. Empty pieces are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Tokenizes and drops stopwords.
pub fn normalize(text: &str, stopwords: &BTreeSet<String>) -> Vec<String> {
    tokenize(text).into_iter().filter(|t| !stopwords.contains(t)).collect()
}
