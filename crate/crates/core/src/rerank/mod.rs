//! Second-stage reranking of candidate lists.
//!
//! Each (concept, candidate) pair becomes a [`TrainingPair`] of two alias
//! passages. Pairs are scored either by the built-in [`ScorerModel`] or by an
//! external scorer whose output is exchanged through `pairs.jsonl` and
//! `scores.jsonl`.

mod exchange;
mod features;
mod model;
mod pairs;
mod passage;

use std::collections::HashMap;

use crate::candgen::{Candidate, CandidateList, Method};
use crate::error::{Error, Result};

pub use exchange::{export_pairs, import_scores, parse_scores, write_scores, ImportedScores, ScoreRow};
pub use features::{extract_features, group_features, FeatureVector, FEATURE_NAMES, N_FEATURES};
pub use model::{
    loss, mean_loss_and_gradient, objective, sigmoid, train_scorer, training_groups, QueryGroup, ScorerModel,
    TrainOptions, TrainingMeta, PROB_EPS,
};
pub use pairs::{build_pairs, downsample_negatives, group_by_cui, pair_id, parse_pairs, read_pairs, TrainingPair};
pub use passage::{build_passage, Passage, PASSAGE_SEPARATOR};

/// Output of a scorer for one pair. Lists are ordered by `order_key`;
/// `score` is what gets reported.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairScore {
    pub order_key: f64,
    pub score: f64,
}

pub trait PairScorer {
    /// Scores the pairs of one candidate list, given in candidate order.
    fn score_group(&self, pairs: &[&TrainingPair]) -> Result<Vec<PairScore>>;
}

impl PairScorer for ScorerModel {
    /// Orders by the linear score so the ranking is unaffected by sigmoid
    /// saturation; reports the probability.
    fn score_group(&self, pairs: &[&TrainingPair]) -> Result<Vec<PairScore>> {
        Ok(group_features(pairs.iter().copied())
            .iter()
            .map(|x| {
                let z = self.logit(x);
                PairScore {
                    order_key: z,
                    score: sigmoid(z),
                }
            })
            .collect())
    }
}

/// Reorders `cands` by scorer output, best first. Equal outputs keep their
/// first-stage order. The result is a permutation of the input.
pub fn score_and_rerank(
    scorer: &dyn PairScorer,
    cands: &CandidateList,
    pairs: &[&TrainingPair],
) -> Result<CandidateList> {
    let by_qid: HashMap<_, &TrainingPair> = pairs
        .iter()
        .filter(|p| p.cui == cands.cui)
        .map(|p| (p.qid, *p))
        .collect();
    let mismatch = |detail: String| Error::PairMismatch {
        cui: cands.cui.to_string(),
        detail,
    };
    if by_qid.len() != pairs.len() {
        return Err(mismatch("pairs contain other concepts or repeated candidates".into()));
    }
    let ordered = cands
        .candidates
        .iter()
        .map(|c| {
            by_qid
                .get(&c.qid)
                .copied()
                .ok_or_else(|| mismatch(format!("no pair for candidate {}", c.qid)))
        })
        .collect::<Result<Vec<_>>>()?;
    if ordered.len() != pairs.len() {
        return Err(mismatch(format!(
            "{} pairs for {} candidates",
            pairs.len(),
            ordered.len()
        )));
    }

    let scores = scorer.score_group(&ordered)?;
    let mut order: Vec<usize> = (0..ordered.len()).collect();
    // stable sort keeps first-stage order among ties
    order.sort_by(|&a, &b| {
        scores[b]
            .order_key
            .partial_cmp(&scores[a].order_key)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(CandidateList {
        cui: cands.cui.clone(),
        method: Method::Rerank,
        k: cands.k,
        candidates: order
            .into_iter()
            .map(|i| Candidate {
                qid: cands.candidates[i].qid,
                score: scores[i].score,
            })
            .collect(),
    })
}
