//! First-stage retrieval: BM25 over a fielded inverted index and character
//! n-gram TF-IDF cosine search.

mod bm25;
mod index;
mod tfidf;
mod tokenize;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Cui, Qid};
use crate::error::{Error, Result};

pub use bm25::{bm25_search, query_tokens, Bm25Params, QUERY_TOKEN_CAP};
pub use index::{build_index, FieldIndex, InvertedIndex, Posting, INDEX_MAGIC, INDEX_VERSION};
pub use tfidf::{char_ngrams, char_tfidf_search, CharTfidfIndex, SparseVector};
pub use tokenize::tokenize;

pub const DEFAULT_K: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Title,
    Text,
    Aliases,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::Title, Field::Text, Field::Aliases];

    pub fn name(self) -> &'static str {
        match self {
            Field::Title => "title",
            Field::Text => "text",
            Field::Aliases => "aliases",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Field> {
        Field::ALL.get(code as usize).copied()
    }
}

impl FromStr for Field {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown field {s:?}")))
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which stage produced a candidate list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bm25,
    CharTfidf,
    Rerank,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bm25 => "bm25",
            Method::CharTfidf => "char_tfidf",
            Method::Rerank => "rerank",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm25" => Ok(Method::Bm25),
            "char_tfidf" => Ok(Method::CharTfidf),
            "rerank" => Ok(Method::Rerank),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub qid: Qid,
    pub score: f64,
}

/// Ranked candidates for one concept, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateList {
    pub cui: Cui,
    pub method: Method,
    pub k: usize,
    pub candidates: Vec<Candidate>,
}

impl CandidateList {
    pub fn empty(cui: Cui, method: Method, k: usize) -> Self {
        CandidateList {
            cui,
            method,
            k,
            candidates: Vec::new(),
        }
    }

    pub fn qids(&self) -> impl Iterator<Item = Qid> + '_ {
        self.candidates.iter().map(|c| c.qid)
    }

    /// 1-based rank of `qid`, if present.
    pub fn rank_of(&self, qid: Qid) -> Option<usize> {
        self.candidates.iter().position(|c| c.qid == qid).map(|i| i + 1)
    }

    /// Checks the ordering contract: length at most k, unique qids, scores
    /// non-increasing.
    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() > self.k {
            return Err(Error::InvalidRun(format!(
                "{}: {} candidates exceed k={}",
                self.cui,
                self.candidates.len(),
                self.k
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c.qid) {
                return Err(Error::InvalidRun(format!(
                    "{}: duplicate candidate {}",
                    self.cui, c.qid
                )));
            }
        }
        if self.candidates.windows(2).any(|w| w[0].score < w[1].score) {
            return Err(Error::InvalidRun(format!("{}: scores not sorted", self.cui)));
        }
        Ok(())
    }

    pub fn to_row(&self) -> CandidateRow {
        CandidateRow {
            cui: self.cui.clone(),
            method: self.method,
            candidates: self
                .candidates
                .iter()
                .enumerate()
                .map(|(i, c)| CandidateEntry {
                    qid: c.qid,
                    title: None,
                    score: c.score,
                    rank: i + 1,
                })
                .collect(),
        }
    }
}

/// Orders by score descending, then numeric QID ascending.
pub(crate) fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.qid.cmp(&b.qid))
}

/// Keeps the best `k` of `scored` under [`rank_order`].
pub(crate) fn top_k(mut scored: Vec<Candidate>, k: usize) -> Vec<Candidate> {
    if scored.len() > k && k > 0 {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
    scored.truncate(k);
    scored
}

/// One line of `candidates.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub cui: Cui,
    pub method: Method,
    pub candidates: Vec<CandidateEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub qid: Qid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub score: f64,
    pub rank: usize,
}

impl CandidateRow {
    /// Converts back to a list. Ranks must be 1..=n in order; `k` is taken
    /// as the list length when not otherwise known.
    pub fn into_list(self, k: Option<usize>) -> Result<CandidateList> {
        for (i, c) in self.candidates.iter().enumerate() {
            if c.rank != i + 1 {
                return Err(Error::InvalidRun(format!(
                    "{}: rank {} at position {}",
                    self.cui,
                    c.rank,
                    i + 1
                )));
            }
        }
        let n = self.candidates.len();
        Ok(CandidateList {
            cui: self.cui,
            method: self.method,
            k: k.unwrap_or(n).max(n),
            candidates: self
                .candidates
                .into_iter()
                .map(|c| Candidate {
                    qid: c.qid,
                    score: c.score,
                })
                .collect(),
        })
    }
}

/// Reads `candidates.jsonl`.
pub fn parse_candidates<R: BufRead>(reader: R) -> Result<Vec<CandidateList>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: CandidateRow =
            serde_json::from_str(&line).map_err(|e| Error::record(i + 1, format!("malformed record ({e})")))?;
        if !seen.insert(row.cui.clone()) {
            return Err(Error::DuplicateCui(row.cui.to_string()));
        }
        out.push(row.into_list(None).map_err(|e| Error::record(i + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn read_candidates(path: &std::path::Path) -> Result<Vec<CandidateList>> {
    parse_candidates(std::io::BufReader::new(std::fs::File::open(path)?))
}
