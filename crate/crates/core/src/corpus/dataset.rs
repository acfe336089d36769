use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{AlignmentRecord, Concept, Cui, DatasetSplit, WikiEntity};
use crate::error::{Error, Result};

/// Train/valid/test ratios giving roughly 10k/2k/5.8k on 17.8k records.
pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.562, 0.112, 0.326);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    pub fn file_name(self) -> &'static str {
        match self {
            SplitName::Train => "train.jsonl",
            SplitName::Valid => "valid.jsonl",
            SplitName::Test => "test.jsonl",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        })
    }
}

#[derive(Clone, Debug)]
pub struct DatasetOptions {
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    /// When set, only these concepts may be aligned (e.g. a single source
    /// vocabulary). Concepts outside the set are ignored entirely.
    pub restrict_to: Option<HashSet<Cui>>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            ratios: DEFAULT_RATIOS,
            seed: 13,
            restrict_to: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AlignmentDataset {
    pub train: DatasetSplit,
    pub valid: DatasetSplit,
    pub test: DatasetSplit,
    /// Concepts with no linked entity, in input order.
    pub unaligned: Vec<Concept>,
    /// Number of CUIs claimed by more than one entity.
    pub conflicts: usize,
}

impl AlignmentDataset {
    pub fn splits(&self) -> [&DatasetSplit; 3] {
        [&self.train, &self.valid, &self.test]
    }

    /// All records, sorted by cui.
    pub fn all_records(&self) -> Vec<AlignmentRecord> {
        let mut all: Vec<_> = self.splits().iter().flat_map(|s| s.records.iter().cloned()).collect();
        all.sort_by(|a, b| a.cui.cmp(&b.cui));
        all
    }
}

fn check_ratios((train, valid, test): (f64, f64, f64)) -> Result<()> {
    if [train, valid, test].iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidRatios("ratios must be finite and non-negative".into()));
    }
    let sum = train + valid + test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidRatios(format!("ratios sum to {sum}, expected 1.0")));
    }
    Ok(())
}

/// Pairs every entity carrying a known CUI with its concept, then shuffles
/// with a seeded RNG and partitions by `options.ratios`.
///
/// When several entities claim the same CUI the one with the smallest QID is
/// kept. Every CUI and QID appears in at most one record, so the splits are
/// disjoint on both.
pub fn build_alignment_dataset(
    concepts: &[Concept],
    entities: &[WikiEntity],
    options: &DatasetOptions,
) -> Result<AlignmentDataset> {
    check_ratios(options.ratios)?;

    let allowed = |cui: &Cui| options.restrict_to.as_ref().is_none_or(|set| set.contains(cui));
    let by_cui: HashMap<&Cui, &Concept> = concepts
        .iter()
        .filter(|c| allowed(&c.cui))
        .map(|c| (&c.cui, c))
        .collect();

    let mut linked: BTreeMap<&Cui, Vec<&WikiEntity>> = BTreeMap::new();
    let mut seen_qids = HashSet::new();
    for entity in entities {
        let Some(cui) = entity.umls_cui.as_ref() else { continue };
        if by_cui.contains_key(cui) && seen_qids.insert(entity.qid) {
            linked.entry(cui).or_default().push(entity);
        }
    }

    let mut conflicts = 0;
    let mut records: Vec<AlignmentRecord> = linked
        .into_iter()
        .map(|(cui, mut claimants)| {
            claimants.sort_by_key(|e| e.qid);
            if claimants.len() > 1 {
                conflicts += 1;
                let qids: Vec<String> = claimants.iter().map(|e| e.qid.to_string()).collect();
                warn!(%cui, claimants = %qids.join(","), kept = %claimants[0].qid, "cui linked from several entities");
            }
            AlignmentRecord::from_pair(by_cui[cui], claimants[0])
        })
        .collect();

    if records.is_empty() {
        return Err(Error::EmptyAlignment);
    }

    let aligned: HashSet<Cui> = records.iter().map(|r| r.cui.clone()).collect();
    let unaligned = concepts
        .iter()
        .filter(|c| allowed(&c.cui) && !aligned.contains(&c.cui))
        .cloned()
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    records.shuffle(&mut rng);

    let n = records.len();
    let (r_train, r_valid, _) = options.ratios;
    let train_end = ((n as f64 * r_train).round() as usize).min(n);
    let valid_end = ((n as f64 * (r_train + r_valid)).round() as usize).clamp(train_end, n);

    let test = records.split_off(valid_end);
    let valid = records.split_off(train_end);
    let train = records;
    let split = |name, records| DatasetSplit {
        name,
        records,
        seed: options.seed,
    };

    Ok(AlignmentDataset {
        train: split(SplitName::Train, train),
        valid: split(SplitName::Valid, valid),
        test: split(SplitName::Test, test),
        unaligned,
        conflicts,
    })
}
