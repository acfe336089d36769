//! File boundary with external scorers: `pairs.jsonl` out, `scores.jsonl` in.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PairScore, PairScorer, TrainingPair};
use crate::corpus::write_jsonl_file;
use crate::error::{Error, Result};

pub fn export_pairs(pairs: &[TrainingPair], path: &Path) -> Result<()> {
    write_jsonl_file(path, pairs)
}

/// One line of `scores.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub pair_id: String,
    pub score: f64,
}

/// Scores keyed by pair id, each in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImportedScores(pub HashMap<String, f64>);

impl ImportedScores {
    pub fn get(&self, pair_id: &str) -> Option<f64> {
        self.0.get(pair_id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl PairScorer for ImportedScores {
    fn score_group(&self, pairs: &[&TrainingPair]) -> Result<Vec<PairScore>> {
        pairs
            .iter()
            .map(|p| {
                self.get(&p.pair_id)
                    .map(|s| PairScore { order_key: s, score: s })
                    .ok_or_else(|| Error::MissingScore {
                        pair_id: p.pair_id.clone(),
                        qid: p.qid.to_string(),
                    })
            })
            .collect()
    }
}

pub fn parse_scores<R: BufRead>(reader: R) -> Result<ImportedScores> {
    let mut scores = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ScoreRow =
            serde_json::from_str(&line).map_err(|e| Error::record(i + 1, format!("malformed record ({e})")))?;
        if !(0.0..=1.0).contains(&row.score) {
            return Err(Error::ScoreOutOfRange {
                pair_id: row.pair_id,
                score: row.score,
            });
        }
        if scores.insert(row.pair_id.clone(), row.score).is_some() {
            return Err(Error::DuplicatePairId(row.pair_id));
        }
    }
    Ok(ImportedScores(scores))
}

pub fn import_scores(path: &Path) -> Result<ImportedScores> {
    parse_scores(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    write_jsonl_file(path, rows)
}
