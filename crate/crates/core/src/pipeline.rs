//! Batch helpers that run the per-concept operations over whole collections.
//! Queries are independent, so they run in parallel; output order always
//! follows input order.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::candgen::{bm25_search, Bm25Params, CandidateList, CharTfidfIndex, InvertedIndex};
use crate::corpus::{Concept, Cui, Qid, WikiEntity};
use crate::error::{Error, Result};
use crate::rerank::{build_pairs, group_by_cui, score_and_rerank, PairScorer, TrainingPair};

pub enum CandidateSource<'a> {
    Bm25 {
        index: &'a InvertedIndex,
        params: Bm25Params,
    },
    CharTfidf(&'a CharTfidfIndex),
}

impl CandidateSource<'_> {
    pub fn search(&self, query: &Concept, k: usize) -> Result<CandidateList> {
        match self {
            CandidateSource::Bm25 { index, params } => bm25_search(index, query, k, params),
            CandidateSource::CharTfidf(index) => index.search(query, k),
        }
    }
}

pub fn generate_candidates(source: &CandidateSource<'_>, queries: &[Concept], k: usize) -> Result<Vec<CandidateList>> {
    queries.par_iter().map(|q| source.search(q, k)).collect()
}

/// Builds pairs for every candidate list. Lists whose concept is unknown
/// are an error; labels come from `gold` for the concepts it covers.
pub fn build_all_pairs(
    concepts: &[Concept],
    lists: &[CandidateList],
    entities: &[WikiEntity],
    gold: Option<&HashMap<Cui, Qid>>,
) -> Result<Vec<TrainingPair>> {
    let by_cui: HashMap<&Cui, &Concept> = concepts.iter().map(|c| (&c.cui, c)).collect();
    let by_qid: HashMap<Qid, &WikiEntity> = entities.iter().map(|e| (e.qid, e)).collect();
    let nested = lists
        .par_iter()
        .map(|list| {
            let concept = by_cui
                .get(&list.cui)
                .ok_or_else(|| Error::InvalidArgument(format!("candidate list for unknown concept {}", list.cui)))?;
            // a concept outside the gold map stays unlabelled
            let gold_qid = gold.and_then(|g| g.get(&list.cui).copied());
            build_pairs(concept, list, &by_qid, gold_qid)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Reranks every list with the pairs sharing its concept.
pub fn rerank_all(
    scorer: &(dyn PairScorer + Sync),
    lists: &[CandidateList],
    pairs: &[TrainingPair],
) -> Result<Vec<CandidateList>> {
    let groups = group_by_cui(pairs);
    lists
        .par_iter()
        .map(|list| {
            let group = groups.get(&list.cui).map(Vec::as_slice).unwrap_or(&[]);
            score_and_rerank(scorer, list, group)
        })
        .collect()
}
