//! Brute-force reference implementations used to check the library.
//! Each one recomputes its quantity from first principles with plain loops
//! and no shared state with the code under test, except the tokenizer.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use kbalign_core::candgen::tokenize;
use kbalign_core::corpus::{Concept, Qid, WikiEntity};

/// Field texts in the order title, text, aliases; `None` when absent.
fn field_tokens(e: &WikiEntity, field: &str) -> Option<Vec<String>> {
    match field {
        "title" => Some(tokenize(&e.title)),
        "text" => e.text.as_ref().map(|t| tokenize(t)),
        "aliases" => {
            let mut out = Vec::new();
            for a in &e.aliases {
                out.extend(tokenize(&a.text));
            }
            Some(out)
        }
        _ => panic!("unknown field {field}"),
    }
}

fn query_terms(concept: &Concept) -> Vec<String> {
    let mut terms: Vec<String> = Vec::new();
    for a in &concept.aliases {
        for t in tokenize(&a.text) {
            if !terms.contains(&t) {
                terms.push(t);
            }
        }
    }
    terms
}

/// Sorts by score descending, then QID ascending.
pub fn rank(mut scored: Vec<(Qid, f64)>) -> Vec<(Qid, f64)> {
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored
}

/// Every document with a positive BM25 score, ranked.
pub fn bm25(entities: &[WikiEntity], fields: &[&str], concept: &Concept, k1: f64, b: f64) -> Vec<(Qid, f64)> {
    let n = entities.len() as f64;
    let terms = query_terms(concept);
    let mut scores = vec![0.0; entities.len()];
    for field in fields {
        let docs: Vec<Option<Vec<String>>> = entities.iter().map(|e| field_tokens(e, field)).collect();
        let present: Vec<usize> = docs.iter().flatten().map(Vec::len).collect();
        let avg = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<usize>() as f64 / present.len() as f64
        };
        for term in &terms {
            let df = docs
                .iter()
                .filter(|d| d.as_ref().is_some_and(|d| d.contains(term)))
                .count() as f64;
            if df == 0.0 {
                continue;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for (i, d) in docs.iter().enumerate() {
                let Some(d) = d else { continue };
                let tf = d.iter().filter(|t| *t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let len_norm = if avg > 0.0 { d.len() as f64 / avg } else { 0.0 };
                scores[i] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_norm));
            }
        }
    }
    rank(
        entities
            .iter()
            .zip(scores)
            .filter(|(_, s)| *s > 0.0)
            .map(|(e, s)| (e.qid, s))
            .collect(),
    )
}

/// Character n-grams of every token of every text, counted.
pub fn ngram_counts(texts: &[&str], n_min: usize, n_max: usize) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for text in texts {
        for token in tokenize(text) {
            let chars: Vec<char> = token.chars().collect();
            for n in n_min..=n_max {
                if n > chars.len() {
                    break;
                }
                for start in 0..=chars.len() - n {
                    let g: String = chars[start..start + n].iter().collect();
                    *out.entry(g).or_insert(0.0) += 1.0;
                }
            }
        }
    }
    out
}

pub fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().map(|(g, w)| w * b.get(g).copied().unwrap_or(0.0)).sum();
    let na = a.values().map(|w| w * w).sum::<f64>().sqrt();
    let nb = b.values().map(|w| w * w).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

fn alias_texts(e: &WikiEntity) -> Vec<&str> {
    e.aliases.iter().map(|a| a.text.as_str()).collect()
}

/// TF-IDF weights of `texts` given the collection, `idf = ln(N/(1+df)) + 1`.
pub fn tfidf_vector(entities: &[WikiEntity], texts: &[&str], n_min: usize, n_max: usize) -> BTreeMap<String, f64> {
    let docs: Vec<BTreeMap<String, f64>> = entities
        .iter()
        .map(|e| ngram_counts(&alias_texts(e), n_min, n_max))
        .collect();
    let n = entities.len() as f64;
    ngram_counts(texts, n_min, n_max)
        .into_iter()
        .map(|(g, tf)| {
            let df = docs.iter().filter(|d| d.contains_key(&g)).count() as f64;
            let w = tf * ((n / (1.0 + df)).ln() + 1.0);
            (g, w)
        })
        .filter(|(_, w)| *w > 0.0)
        .collect()
}

/// Cosine of the concept against every entity, positive scores only, ranked.
pub fn char_tfidf(entities: &[WikiEntity], concept: &Concept, n_min: usize, n_max: usize) -> Vec<(Qid, f64)> {
    let q_texts: Vec<&str> = concept.aliases.iter().map(|a| a.text.as_str()).collect();
    let q = tfidf_vector(entities, &q_texts, n_min, n_max);
    rank(
        entities
            .iter()
            .map(|e| {
                (
                    e.qid,
                    cosine(&q, &tfidf_vector(entities, &alias_texts(e), n_min, n_max)),
                )
            })
            .filter(|(_, s)| *s > 0.0)
            .collect(),
    )
}

/// Recall@k from 1-based gold ranks (`None` = not retrieved).
pub fn recall(ranks: &[Option<usize>], k: usize) -> f64 {
    let mut hits = 0;
    for r in ranks.iter().flatten() {
        if *r <= k {
            hits += 1;
        }
    }
    hits as f64 / ranks.len() as f64
}

pub fn normalized_recall(ranks: &[Option<usize>], k: usize) -> f64 {
    let retrieved: Vec<Option<usize>> = ranks.iter().copied().filter(Option::is_some).collect();
    recall(&retrieved, k)
}

fn clamp_prob(p: f64) -> f64 {
    p.max(1e-7).min(1.0 - 1e-7)
}

/// `-ln f(d+) - sum ln(1 - f(d-))` with scores clamped away from 0 and 1.
pub fn pairwise_loss(positive: f64, negatives: &[f64]) -> f64 {
    let mut l = -clamp_prob(positive).ln();
    for s in negatives {
        l -= (1.0 - clamp_prob(*s)).ln();
    }
    l
}

pub fn logistic(weights: &[f64], bias: f64, x: &[f64]) -> f64 {
    let z: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
    1.0 / (1.0 + (-z).exp())
}

/// Mean group loss of a logistic scorer; `params` is weights then bias.
pub fn mean_group_loss(params: &[f64], groups: &[(Vec<f64>, Vec<Vec<f64>>)]) -> f64 {
    let (w, b) = params.split_at(params.len() - 1);
    let total: f64 = groups
        .iter()
        .map(|(pos, negs)| {
            let negs: Vec<f64> = negs.iter().map(|x| logistic(w, b[0], x)).collect();
            pairwise_loss(logistic(w, b[0], pos), &negs)
        })
        .sum();
    total / groups.len() as f64
}

/// Central finite-difference gradient.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, at: &[f64], step: f64) -> Vec<f64> {
    (0..at.len())
        .map(|i| {
            let mut hi = at.to_vec();
            let mut lo = at.to_vec();
            hi[i] += step;
            lo[i] -= step;
            (f(&hi) - f(&lo)) / (2.0 * step)
        })
        .collect()
}

/// True when `ranked` holds each of `expected` exactly once and nothing else.
pub fn same_members(ranked: &[Qid], expected: &[Qid]) -> bool {
    let a: HashSet<_> = ranked.iter().collect();
    let b: HashSet<_> = expected.iter().collect();
    a == b && ranked.len() == expected.len()
}
