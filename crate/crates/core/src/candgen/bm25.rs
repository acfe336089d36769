use std::collections::{HashMap, HashSet};

use tracing::warn;

use super::{tokenize, top_k, Candidate, CandidateList, InvertedIndex, Method};
use crate::corpus::Concept;
use crate::error::{Error, Result};

/// Upper bound on distinct query tokens; extra tokens are dropped.
pub const QUERY_TOKEN_CAP: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always positive.
    pub fn idf(&self, n_docs: usize, df: usize) -> f64 {
        let (n, df) = (n_docs as f64, df as f64);
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score of one (token, field) clause for a document.
    pub fn clause_score(&self, idf: f64, tf: u32, len: u32, avg_len: f64) -> f64 {
        let tf = tf as f64;
        let norm = if avg_len > 0.0 { len as f64 / avg_len } else { 0.0 };
        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * norm))
    }
}

/// Deduplicated union of the tokens of every alias, in first-seen order,
/// truncated to [`QUERY_TOKEN_CAP`].
pub fn query_tokens(concept: &Concept) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut tokens = Vec::new();
    for alias in &concept.aliases {
        for t in tokenize(&alias.text) {
            if seen.insert(t.clone()) {
                tokens.push(t);
            }
        }
    }
    if tokens.len() > QUERY_TOKEN_CAP {
        warn!(cui = %concept.cui, tokens = tokens.len(), cap = QUERY_TOKEN_CAP, "query truncated");
        tokens.truncate(QUERY_TOKEN_CAP);
    }
    tokens
}

/// Disjunctive BM25 over every indexed field: a document's score is the sum
/// of the clause scores of all (token, field) pairs it matches.
pub fn bm25_search(index: &InvertedIndex, query: &Concept, k: usize, params: &Bm25Params) -> Result<CandidateList> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let tokens = query_tokens(query);
    if tokens.is_empty() {
        warn!(cui = %query.cui, "aliases produce no query tokens");
        return Ok(CandidateList::empty(query.cui.clone(), Method::Bm25, k));
    }

    let n = index.n_docs();
    let mut acc: HashMap<u32, f64> = HashMap::new();
    for field in index.fields() {
        let avg = field.avg_length();
        for token in &tokens {
            let postings = field.postings(token);
            if postings.is_empty() {
                continue;
            }
            let idf = params.idf(n, postings.len());
            for p in postings {
                *acc.entry(p.doc).or_insert(0.0) += params.clause_score(idf, p.tf, field.doc_length(p.doc), avg);
            }
        }
    }

    let scored = acc
        .into_iter()
        .map(|(doc, score)| Candidate {
            qid: index.qid(doc),
            score,
        })
        .collect();
    Ok(CandidateList {
        cui: query.cui.clone(),
        method: Method::Bm25,
        k,
        candidates: top_k(scored, k),
    })
}
