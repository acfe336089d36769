use std::collections::HashSet;

use super::TrainingPair;
use crate::candgen::{tokenize, SparseVector};
use crate::corpus::SUPPORTED_LANGUAGES;

pub const FEATURE_NAMES: [&str; 7] = [
    "token_jaccard",
    "char_ngram_cosine",
    "bm25_score_normalized",
    "reciprocal_bm25_rank",
    "shared_language_count_normalized",
    "exact_alias_match_flag",
    "length_ratio",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

const NGRAM_MIN: usize = 1;
const NGRAM_MAX: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; N_FEATURES] {
        &self.0
    }
}

/// Lexical and multilingual features of a pair. `list_max_score` is the best
/// first-stage score in the pair's candidate list.
pub fn extract_features(pair: &TrainingPair, list_max_score: f64) -> FeatureVector {
    let q_tokens = tokenize(&pair.query_passage.text);
    let c_tokens = tokenize(&pair.cand_passage.text);
    let q_set: HashSet<&str> = q_tokens.iter().map(String::as_str).collect();
    let c_set: HashSet<&str> = c_tokens.iter().map(String::as_str).collect();
    let union = q_set.union(&c_set).count();
    let jaccard = if union == 0 {
        0.0
    } else {
        q_set.intersection(&c_set).count() as f64 / union as f64
    };

    let q_vec = SparseVector::term_frequencies(pair.query_passage.segments(), NGRAM_MIN, NGRAM_MAX);
    let c_vec = SparseVector::term_frequencies(pair.cand_passage.segments(), NGRAM_MIN, NGRAM_MAX);
    let cosine = q_vec.cosine(&c_vec);

    let score_norm = if list_max_score > 0.0 && pair.bm25_score.is_finite() {
        (pair.bm25_score / list_max_score).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let reciprocal_rank = 1.0 / pair.bm25_rank.max(1) as f64;

    let shared_langs = pair
        .query_passage
        .langs
        .iter()
        .filter(|l| l.is_determined() && pair.cand_passage.langs.contains(l))
        .collect::<HashSet<_>>()
        .len();
    let lang_norm = shared_langs as f64 / SUPPORTED_LANGUAGES.len() as f64;

    let q_aliases: HashSet<String> = pair.query_passage.segments().map(str::to_lowercase).collect();
    let exact = pair
        .cand_passage
        .segments()
        .any(|s| q_aliases.contains(&s.to_lowercase()));

    let (a, b) = (q_tokens.len(), c_tokens.len());
    let length_ratio = if a.max(b) == 0 {
        0.0
    } else {
        a.min(b) as f64 / a.max(b) as f64
    };

    FeatureVector([
        jaccard,
        cosine,
        score_norm,
        reciprocal_rank,
        lang_norm,
        if exact { 1.0 } else { 0.0 },
        length_ratio,
    ])
}

/// Features for every pair of one candidate list, normalizing first-stage
/// scores by the list maximum.
pub fn group_features<'a>(group: impl IntoIterator<Item = &'a TrainingPair> + Clone) -> Vec<FeatureVector> {
    let max = group
        .clone()
        .into_iter()
        .map(|p| p.bm25_score)
        .filter(|s| s.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    group.into_iter().map(|p| extract_features(p, max)).collect()
}
