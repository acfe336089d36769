use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{build_passage, Passage};
use crate::candgen::CandidateList;
use crate::corpus::{Concept, Cui, Qid, WikiEntity};
use crate::error::{Error, Result};

/// One (concept, candidate) unit of the reranking objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub pair_id: String,
    pub cui: Cui,
    pub qid: Qid,
    pub query_passage: Passage,
    pub cand_passage: Passage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    pub bm25_score: f64,
    pub bm25_rank: usize,
}

impl TrainingPair {
    pub fn is_positive(&self) -> bool {
        self.label == Some(1)
    }
}

pub fn pair_id(cui: &Cui, qid: Qid) -> String {
    format!("{cui}:{qid}")
}

/// One pair per candidate, in candidate order. Candidate passages use the
/// entity aliases only (the title is one of them); page text is left out.
/// Labels are 1 for `gold`, 0 otherwise, and absent when `gold` is `None`.
pub fn build_pairs(
    concept: &Concept,
    cands: &CandidateList,
    entities: &HashMap<Qid, &WikiEntity>,
    gold: Option<Qid>,
) -> Result<Vec<TrainingPair>> {
    let query_passage = build_passage(&concept.aliases)?;
    cands
        .candidates
        .iter()
        .enumerate()
        .map(|(i, cand)| {
            let entity = entities
                .get(&cand.qid)
                .ok_or_else(|| Error::UnknownQid(cand.qid.to_string()))?;
            Ok(TrainingPair {
                pair_id: pair_id(&concept.cui, cand.qid),
                cui: concept.cui.clone(),
                qid: cand.qid,
                query_passage: query_passage.clone(),
                cand_passage: build_passage(&entity.aliases)?,
                label: gold.map(|g| u8::from(g == cand.qid)),
                bm25_score: cand.score,
                bm25_rank: i + 1,
            })
        })
        .collect()
}

/// Groups pairs by cui, keeping input order inside each group.
pub fn group_by_cui(pairs: &[TrainingPair]) -> BTreeMap<&Cui, Vec<&TrainingPair>> {
    let mut groups: BTreeMap<&Cui, Vec<&TrainingPair>> = BTreeMap::new();
    for p in pairs {
        groups.entry(&p.cui).or_default().push(p);
    }
    groups
}

/// Keeps every positive and at most `m` negatives drawn uniformly without
/// replacement, preserving the original order.
pub fn downsample_negatives<'a, R: Rng>(group: &[&'a TrainingPair], m: usize, rng: &mut R) -> Vec<&'a TrainingPair> {
    let negatives: Vec<usize> = (0..group.len()).filter(|&i| !group[i].is_positive()).collect();
    if negatives.len() <= m {
        return group.to_vec();
    }
    let kept: HashSet<usize> = sample(rng, negatives.len(), m)
        .into_iter()
        .map(|j| negatives[j])
        .collect();
    group
        .iter()
        .enumerate()
        .filter(|(i, p)| p.is_positive() || kept.contains(i))
        .map(|(_, p)| *p)
        .collect()
}

/// Reads `pairs.jsonl`, rejecting duplicate ids and labels other than 0/1.
pub fn parse_pairs<R: BufRead>(reader: R) -> Result<Vec<TrainingPair>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: TrainingPair =
            serde_json::from_str(&line).map_err(|e| Error::record(i + 1, format!("malformed record ({e})")))?;
        if matches!(pair.label, Some(l) if l > 1) {
            return Err(Error::record(i + 1, "label must be 0 or 1"));
        }
        if !seen.insert(pair.pair_id.clone()) {
            return Err(Error::DuplicatePairId(pair.pair_id));
        }
        out.push(pair);
    }
    Ok(out)
}

pub fn read_pairs(path: &std::path::Path) -> Result<Vec<TrainingPair>> {
    parse_pairs(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candgen::{Candidate, Method};
    use crate::corpus::{AliasTerm, LangTag};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: u64) -> (Concept, CandidateList, Vec<WikiEntity>) {
        let concept = Concept::new(
            "C0017168".parse().unwrap(),
            vec![AliasTerm::new("GERD", LangTag::EN).unwrap()],
            None,
        )
        .unwrap();
        let entities: Vec<WikiEntity> = (1..=n)
            .map(|q| WikiEntity::new(Qid::new(q), &format!("Page {q}"), vec![], Some("body".into()), None).unwrap())
            .collect();
        let cands = CandidateList {
            cui: concept.cui.clone(),
            method: Method::Bm25,
            k: 64,
            candidates: (1..=n)
                .map(|q| Candidate {
                    qid: Qid::new(q),
                    score: 100.0 - q as f64,
                })
                .collect(),
        };
        (concept, cands, entities)
    }

    fn lookup(entities: &[WikiEntity]) -> HashMap<Qid, &WikiEntity> {
        entities.iter().map(|e| (e.qid, e)).collect()
    }

    #[test]
    fn gold_in_list() {
        let (c, l, e) = setup(64);
        let pairs = build_pairs(&c, &l, &lookup(&e), Some(Qid::new(7))).unwrap();
        assert_eq!(pairs.len(), 64);
        assert_eq!(pairs.iter().filter(|p| p.label == Some(1)).count(), 1);
        assert_eq!(pairs.iter().filter(|p| p.label == Some(0)).count(), 63);
        assert_eq!(pairs[6].bm25_rank, 7);
        assert_eq!(pairs[6].pair_id, "C0017168:Q7");
        assert_eq!(pairs[0].cand_passage.text, "Page 1");
    }

    #[test]
    fn gold_missing_and_inference() {
        let (c, l, e) = setup(64);
        let pairs = build_pairs(&c, &l, &lookup(&e), Some(Qid::new(999))).unwrap();
        assert!(pairs.iter().all(|p| p.label == Some(0)));
        let pairs = build_pairs(&c, &l, &lookup(&e), None).unwrap();
        assert!(pairs.iter().all(|p| p.label.is_none()));
    }

    #[test]
    fn unresolvable_qid() {
        let (c, l, e) = setup(3);
        let err = build_pairs(&c, &l, &lookup(&e[..2]), None).unwrap_err();
        assert_eq!(err.to_string(), "unknown qid Q3");
    }

    #[test]
    fn downsampling_keeps_positive() {
        let (c, l, e) = setup(20);
        let pairs = build_pairs(&c, &l, &lookup(&e), Some(Qid::new(15))).unwrap();
        let refs: Vec<&TrainingPair> = pairs.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kept = downsample_negatives(&refs, 4, &mut rng);
        assert_eq!(kept.len(), 5);
        assert!(kept.iter().any(|p| p.is_positive()));
        assert!(kept.windows(2).all(|w| w[0].bm25_rank < w[1].bm25_rank));
    }

    #[test]
    fn pairs_file_round_trip() {
        let (c, l, e) = setup(3);
        let pairs = build_pairs(&c, &l, &lookup(&e), Some(Qid::new(2))).unwrap();
        let mut buf = Vec::new();
        crate::corpus::write_jsonl(&mut buf, &pairs).unwrap();
        assert_eq!(parse_pairs(buf.as_slice()).unwrap(), pairs);
        let doubled = [buf.clone(), buf].concat();
        assert!(matches!(
            parse_pairs(doubled.as_slice()),
            Err(Error::DuplicatePairId(_))
        ));
    }
}
