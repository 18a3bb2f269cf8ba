//! Deterministic text similarity for duplicate detection.

use std::collections::BTreeMap;

/// Scores two descriptions in `[0, 1]`. Implementations must be symmetric.
pub trait SimilarityScorer {
    fn score(&self, a: &str, b: &str) -> f64;
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "into", "is", "of", "on",
    "or", "the", "to", "with",
];

/// Term-frequency cosine over normalized tokens.
///
/// Normalization lowercases, strips punctuation, splits on whitespace, drops
/// a short stopword list and folds a plain trailing `s` (`bookings` and
/// `booking` are one term; `class` is left alone).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TfCosine {
    pub drop_stopwords: bool,
    pub fold_plurals: bool,
}

impl Default for TfCosine {
    fn default() -> Self {
        Self {
            drop_stopwords: true,
            fold_plurals: true,
        }
    }
}

impl TfCosine {
    /// Plain cosine over lowercased, punctuation-stripped tokens.
    pub fn plain() -> Self {
        Self {
            drop_stopwords: false,
            fold_plurals: false,
        }
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        let cleaned: String = text
            .chars()
            .filter(|c| c.is_alphanumeric() || c.is_whitespace())
            .flat_map(char::to_lowercase)
            .collect();
        cleaned
            .split_whitespace()
            .filter(|t| !(self.drop_stopwords && STOPWORDS.contains(t)))
            .map(|t| {
                if self.fold_plurals
                    && t.chars().count() > 3
                    && t.ends_with('s')
                    && !t.ends_with("ss")
                {
                    t[..t.len() - 1].to_string()
                } else {
                    t.to_string()
                }
            })
            .collect()
    }

    pub fn term_frequencies(&self, text: &str) -> BTreeMap<String, u64> {
        let mut tf = BTreeMap::new();
        for t in self.tokens(text) {
            *tf.entry(t).or_insert(0) += 1;
        }
        tf
    }
}

impl SimilarityScorer for TfCosine {
    fn score(&self, a: &str, b: &str) -> f64 {
        let (ta, tb) = (self.term_frequencies(a), self.term_frequencies(b));
        let norm = |tf: &BTreeMap<String, u64>| tf.values().map(|n| n * n).sum::<u64>();
        let (na, nb) = (norm(&ta), norm(&tb));
        if na == 0 || nb == 0 {
            return 0.0;
        }
        let dot: u64 = ta
            .iter()
            .filter_map(|(t, n)| tb.get(t).map(|m| n * m))
            .sum();
        dot as f64 / ((na * nb) as f64).sqrt()
    }
}
