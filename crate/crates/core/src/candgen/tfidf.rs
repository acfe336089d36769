use std::collections::{BTreeMap, HashMap};

use tracing::warn;

use super::{tokenize, top_k, Candidate, CandidateList, Method};
use crate::corpus::{Concept, Qid, WikiEntity};
use crate::error::{Error, Result};

/// Multiset of the character n-grams of a single term with lengths in
/// `n_min..=n_max`, counted by occurrence. No boundary padding is added.
pub fn char_ngrams(term: &str, n_min: usize, n_max: usize) -> BTreeMap<String, u32> {
    let chars: Vec<char> = term.chars().collect();
    let mut grams = BTreeMap::new();
    for n in n_min.max(1)..=n_max.min(chars.len()) {
        for window in chars.windows(n) {
            *grams.entry(window.iter().collect::<String>()).or_insert(0) += 1;
        }
    }
    grams
}

/// Gram counts accumulated over every token of every text.
fn gram_counts<'a>(texts: impl IntoIterator<Item = &'a str>, n_min: usize, n_max: usize) -> HashMap<String, u32> {
    let mut counts = HashMap::new();
    for text in texts {
        for token in tokenize(text) {
            for (g, c) in char_ngrams(&token, n_min, n_max) {
                *counts.entry(g).or_insert(0) += c;
            }
        }
    }
    counts
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector {
    entries: BTreeMap<String, f64>,
    norm: f64,
}

impl SparseVector {
    /// Zero and negative weights are dropped.
    pub fn from_weights(weights: impl IntoIterator<Item = (String, f64)>) -> Self {
        let entries: BTreeMap<String, f64> = weights.into_iter().filter(|(_, w)| *w > 0.0).collect();
        let norm = entries.values().map(|w| w * w).sum::<f64>().sqrt();
        SparseVector { entries, norm }
    }

    /// Raw gram counts of `texts` (no idf weighting).
    pub fn term_frequencies<'a>(texts: impl IntoIterator<Item = &'a str>, n_min: usize, n_max: usize) -> Self {
        Self::from_weights(gram_counts(texts, n_min, n_max).into_iter().map(|(g, c)| (g, c as f64)))
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (small, large) = if self.entries.len() <= other.entries.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .entries
            .iter()
            .filter_map(|(g, w)| large.entries.get(g).map(|v| w * v))
            .sum()
    }

    /// Cosine similarity in [0, 1]; zero when either vector is zero.
    pub fn cosine(&self, other: &SparseVector) -> f64 {
        if self.is_zero() || other.is_zero() {
            return 0.0;
        }
        (self.dot(other) / (self.norm * other.norm)).clamp(0.0, 1.0)
    }
}

/// Character n-gram TF-IDF vectors for a collection, with a gram-to-entity
/// inverted list for cosine search. Entities are represented by their
/// aliases (which include the title); page text is never used.
#[derive(Clone, Debug)]
pub struct CharTfidfIndex {
    n_min: usize,
    n_max: usize,
    vocab: HashMap<String, u32>,
    df: Vec<u32>,
    postings: Vec<Vec<(u32, f64)>>,
    doc_table: Vec<Qid>,
    doc_norms: Vec<f64>,
}

impl CharTfidfIndex {
    pub fn build(entities: &[WikiEntity], n_min: usize, n_max: usize) -> Result<Self> {
        if entities.is_empty() {
            return Err(Error::EmptyCollection);
        }
        if n_min == 0 || n_min > n_max {
            return Err(Error::InvalidArgument(format!("bad n-gram bounds {n_min}..={n_max}")));
        }
        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut df: Vec<u32> = Vec::new();
        let mut doc_counts: Vec<Vec<(u32, u32)>> = Vec::with_capacity(entities.len());
        for entity in entities {
            let counts = gram_counts(entity.aliases.iter().map(|a| a.text.as_str()), n_min, n_max);
            let mut ids: Vec<(u32, u32)> = counts
                .into_iter()
                .map(|(g, c)| {
                    let next = vocab.len() as u32;
                    let id = *vocab.entry(g).or_insert(next);
                    if id as usize == df.len() {
                        df.push(0);
                    }
                    df[id as usize] += 1;
                    (id, c)
                })
                .collect();
            ids.sort_unstable();
            doc_counts.push(ids);
        }

        let n = entities.len();
        let mut postings: Vec<Vec<(u32, f64)>> = vec![Vec::new(); vocab.len()];
        let mut doc_norms = Vec::with_capacity(n);
        for (doc, counts) in doc_counts.into_iter().enumerate() {
            let mut sq = 0.0;
            for (id, c) in counts {
                let w = c as f64 * idf(n, df[id as usize]);
                sq += w * w;
                postings[id as usize].push((doc as u32, w));
            }
            doc_norms.push(sq.sqrt());
        }

        Ok(CharTfidfIndex {
            n_min,
            n_max,
            vocab,
            df,
            postings,
            doc_table: entities.iter().map(|e| e.qid).collect(),
            doc_norms,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_table.len()
    }

    pub fn doc_freq(&self, gram: &str) -> u32 {
        self.vocab.get(gram).map_or(0, |&id| self.df[id as usize])
    }

    pub fn idf(&self, gram: &str) -> f64 {
        idf(self.n_docs(), self.doc_freq(gram))
    }

    /// TF-IDF vector of arbitrary alias texts under this collection's idf.
    pub fn vectorize<'a>(&self, texts: impl IntoIterator<Item = &'a str>) -> SparseVector {
        let counts = gram_counts(texts, self.n_min, self.n_max);
        SparseVector::from_weights(counts.into_iter().map(|(g, c)| {
            let w = c as f64 * self.idf(&g);
            (g, w)
        }))
    }

    pub fn concept_vector(&self, concept: &Concept) -> SparseVector {
        self.vectorize(concept.aliases.iter().map(|a| a.text.as_str()))
    }

    pub fn search(&self, query: &Concept, k: usize) -> Result<CandidateList> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let qvec = self.concept_vector(query);
        if qvec.is_zero() {
            warn!(cui = %query.cui, "aliases produce no character n-grams");
            return Ok(CandidateList::empty(query.cui.clone(), Method::CharTfidf, k));
        }
        let mut dots: HashMap<u32, f64> = HashMap::new();
        for (gram, qw) in qvec.entries() {
            let Some(&id) = self.vocab.get(gram) else { continue };
            for &(doc, dw) in &self.postings[id as usize] {
                *dots.entry(doc).or_insert(0.0) += qw * dw;
            }
        }
        let scored = dots
            .into_iter()
            .filter(|(_, dot)| *dot > 0.0)
            .map(|(doc, dot)| Candidate {
                qid: self.doc_table[doc as usize],
                score: (dot / (qvec.norm() * self.doc_norms[doc as usize])).clamp(0.0, 1.0),
            })
            .collect();
        Ok(CandidateList {
            cui: query.cui.clone(),
            method: Method::CharTfidf,
            k,
            candidates: top_k(scored, k),
        })
    }
}

/// `ln(N / (1 + df)) + 1`.
fn idf(n_docs: usize, df: u32) -> f64 {
    (n_docs as f64 / (1.0 + df as f64)).ln() + 1.0
}

/// Builds a [`CharTfidfIndex`] over `entities` and runs one query.
pub fn char_tfidf_search(
    entities: &[WikiEntity],
    query: &Concept,
    k: usize,
    n_min: usize,
    n_max: usize,
) -> Result<CandidateList> {
    CharTfidfIndex::build(entities, n_min, n_max)?.search(query, k)
}
