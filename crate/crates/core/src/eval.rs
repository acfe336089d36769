//! Recall@k and normalized recall@k over ranked runs.
//!
//! Each query has exactly one gold entity, so recall@k is the fraction of
//! queries whose gold appears in the top k. Normalized recall restricts the
//! denominator to queries whose gold appears anywhere in the ranked list,
//! which isolates the reranking stage from candidate generation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candgen::CandidateList;
use crate::corpus::{AlignmentRecord, Cui, Qid};
use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

#[derive(Clone, Debug, PartialEq)]
pub struct QueryRun {
    pub cui: Cui,
    pub gold: Qid,
    pub ranked: Vec<Qid>,
}

impl QueryRun {
    /// 1-based rank of the gold entity, if retrieved.
    pub fn gold_rank(&self) -> Option<usize> {
        self.ranked.iter().position(|q| *q == self.gold).map(|i| i + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub method: String,
    pub queries: Vec<QueryRun>,
}

impl RunResult {
    /// Pairs every gold record with the candidate list for its concept.
    /// Concepts without a list count as empty rankings; lists for concepts
    /// outside `gold` are ignored.
    pub fn from_candidates(method: &str, lists: &[CandidateList], gold: &[AlignmentRecord]) -> Result<Self> {
        let by_cui: HashMap<&Cui, &CandidateList> = lists.iter().map(|l| (&l.cui, l)).collect();
        let mut seen = HashSet::new();
        let mut queries = Vec::with_capacity(gold.len());
        for record in gold {
            if !seen.insert(&record.cui) {
                return Err(Error::InvalidRun(format!(
                    "more than one gold entity for {}",
                    record.cui
                )));
            }
            queries.push(QueryRun {
                cui: record.cui.clone(),
                gold: record.qid,
                ranked: by_cui.get(&record.cui).map(|l| l.qids().collect()).unwrap_or_default(),
            });
        }
        Ok(RunResult {
            method: method.to_owned(),
            queries,
        })
    }

    fn validate(&self) -> Result<()> {
        let mut cuis = HashSet::new();
        for q in &self.queries {
            if !cuis.insert(&q.cui) {
                return Err(Error::InvalidRun(format!("more than one gold entity for {}", q.cui)));
            }
            let mut seen = HashSet::new();
            if let Some(dup) = q.ranked.iter().find(|x| !seen.insert(**x)) {
                return Err(Error::InvalidRun(format!("{} ranks {} twice", q.cui, dup)));
            }
        }
        Ok(())
    }

    fn gold_ranks(&self) -> Result<Vec<Option<usize>>> {
        if self.queries.is_empty() {
            return Err(Error::NoQueries);
        }
        self.validate()?;
        Ok(self.queries.iter().map(QueryRun::gold_rank).collect())
    }
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "ks must be positive and strictly ascending".into(),
        ));
    }
    Ok(())
}

fn hits_at(ranks: &[Option<usize>], k: usize) -> usize {
    ranks.iter().filter(|r| matches!(r, Some(r) if *r <= k)).count()
}

pub fn recall_at_k(run: &RunResult, ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    check_ks(ks)?;
    let ranks = run.gold_ranks()?;
    let n = ranks.len() as f64;
    Ok(ks.iter().map(|&k| (k, hits_at(&ranks, k) as f64 / n)).collect())
}

/// Recall over the queries whose gold appears anywhere in the ranking.
pub fn normalized_recall_at_k(run: &RunResult, ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    check_ks(ks)?;
    let ranks = run.gold_ranks()?;
    let retrieved = ranks.iter().filter(|r| r.is_some()).count();
    if retrieved == 0 {
        return Err(Error::NoRetrievableGold);
    }
    Ok(ks
        .iter()
        .map(|&k| (k, hits_at(&ranks, k) as f64 / retrieved as f64))
        .collect())
}

/// `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub method: String,
    pub n_queries: usize,
    pub n_gold_retrieved: usize,
    pub recall_at: BTreeMap<usize, f64>,
    pub normalized_recall_at: BTreeMap<usize, f64>,
}

pub fn evaluate(run: &RunResult, ks: &[usize]) -> Result<Metrics> {
    let recall_at = recall_at_k(run, ks)?;
    let normalized_recall_at = normalized_recall_at_k(run, ks)?;
    let n_gold_retrieved = run.queries.iter().filter(|q| q.gold_rank().is_some()).count();
    Ok(Metrics {
        method: run.method.clone(),
        n_queries: run.queries.len(),
        n_gold_retrieved,
        recall_at,
        normalized_recall_at,
    })
}

/// Rows `method,k,recall,normalized_recall`, one series per run.
pub fn recall_curve_csv(metrics: &[Metrics]) -> String {
    let mut out = String::from("method,k,recall,normalized_recall\n");
    for m in metrics {
        for (k, r) in &m.recall_at {
            let nr = m.normalized_recall_at.get(k).copied().unwrap_or(f64::NAN);
            writeln!(out, "{},{},{},{}", m.method, k, r, nr).unwrap();
        }
    }
    out
}

/// Evaluates each run and writes `metrics.json` plus `recall_curve.csv`
/// into `out_dir`. With a single run `metrics.json` holds one object;
/// with several it holds an array in run order.
pub fn evaluate_run(runs: &[RunResult], ks: &[usize], out_dir: &Path) -> Result<Vec<Metrics>> {
    if runs.is_empty() {
        return Err(Error::NoQueries);
    }
    let metrics = runs.iter().map(|r| evaluate(r, ks)).collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir)?;
    let mut json = if let [single] = metrics.as_slice() {
        serde_json::to_string_pretty(single)?
    } else {
        serde_json::to_string_pretty(&metrics)?
    };
    json.push('\n');
    std::fs::write(out_dir.join("metrics.json"), json)?;
    std::fs::write(out_dir.join("recall_curve.csv"), recall_curve_csv(&metrics))?;
    Ok(metrics)
}

/// Reads `metrics.json` in either of the shapes [`evaluate_run`] writes.
pub fn read_metrics(path: &Path) -> Result<Vec<Metrics>> {
    let bytes = std::fs::read(path)?;
    if let Ok(one) = serde_json::from_slice::<Metrics>(&bytes) {
        return Ok(vec![one]);
    }
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_from_ranks(ranks: &[Option<usize>]) -> RunResult {
        let queries = ranks
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let gold = Qid::new(1_000 + i as u64);
                let depth = r.unwrap_or(0).max(64).min(100);
                let mut ranked: Vec<Qid> = (0..depth).map(|j| Qid::new(10_000 + j as u64)).collect();
                if let Some(r) = r {
                    ranked[r - 1] = gold;
                }
                QueryRun {
                    cui: format!("C{:07}", i).parse().unwrap(),
                    gold,
                    ranked,
                }
            })
            .collect();
        RunResult {
            method: "bm25".into(),
            queries,
        }
    }

    fn ten_queries() -> RunResult {
        run_from_ranks(&[
            Some(1),
            Some(1),
            Some(1),
            Some(3),
            Some(5),
            Some(9),
            Some(20),
            Some(70),
            None,
            None,
        ])
    }

    #[test]
    fn worked_example_recall() {
        let r = recall_at_k(&ten_queries(), &[1, 4, 8, 64]).unwrap();
        assert_eq!(r[&1], 0.3);
        assert_eq!(r[&4], 0.4);
        assert_eq!(r[&8], 0.5);
        assert_eq!(r[&64], 0.7);
    }

    #[test]
    fn worked_example_normalized() {
        let r = normalized_recall_at_k(&ten_queries(), &[1, 64]).unwrap();
        assert_eq!(r[&1], 3.0 / 8.0);
        // the gold at rank 70 counts as retrieved but lies beyond k = 64
        assert_eq!(r[&64], 7.0 / 8.0);
    }

    #[test]
    fn perfect_run() {
        let run = run_from_ranks(&[Some(1); 5]);
        let m = evaluate(&run, &DEFAULT_KS).unwrap();
        assert!(m.recall_at.values().all(|&v| v == 1.0));
        assert_eq!(m.recall_at, m.normalized_recall_at);
    }

    #[test]
    fn errors() {
        let empty = RunResult {
            method: "x".into(),
            queries: vec![],
        };
        assert!(matches!(recall_at_k(&empty, &[1]), Err(Error::NoQueries)));
        let misses = run_from_ranks(&[None, None]);
        assert!(matches!(
            normalized_recall_at_k(&misses, &[1]),
            Err(Error::NoRetrievableGold)
        ));
        assert!(recall_at_k(&ten_queries(), &[4, 1]).is_err());
        assert!(recall_at_k(&ten_queries(), &[0]).is_err());
    }

    #[test]
    fn empty_ranking_is_a_miss() {
        let mut run = run_from_ranks(&[Some(1), Some(2)]);
        run.queries[1].ranked.clear();
        let m = evaluate(&run, &[1, 2]).unwrap();
        assert_eq!(m.recall_at[&2], 0.5);
        assert_eq!(m.n_gold_retrieved, 1);
    }

    #[test]
    fn step_curve_and_files() {
        let run = run_from_ranks(&[Some(2)]);
        let mut rerank = run.clone();
        rerank.method = "rerank".into();
        let dir = tempfile::tempdir().unwrap();
        let metrics = evaluate_run(&[run, rerank], &[1, 2, 4], dir.path()).unwrap();
        assert_eq!(metrics[0].recall_at[&1], 0.0);
        assert_eq!(metrics[0].recall_at[&2], 1.0);
        let csv = std::fs::read_to_string(dir.path().join("recall_curve.csv")).unwrap();
        assert_eq!(
            csv,
            "method,k,recall,normalized_recall\nbm25,1,0,0\nbm25,2,1,1\nbm25,4,1,1\nrerank,1,0,0\nrerank,2,1,1\nrerank,4,1,1\n"
        );
        assert_eq!(read_metrics(&dir.path().join("metrics.json")).unwrap(), metrics);
    }

    #[test]
    fn duplicate_gold_rejected() {
        let mut run = run_from_ranks(&[Some(1), Some(1)]);
        run.queries[1].cui = run.queries[0].cui.clone();
        assert!(matches!(recall_at_k(&run, &[1]), Err(Error::InvalidRun(_))));
    }
}
