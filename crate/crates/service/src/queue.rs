//! The reviewed run and the curation state derived from decisions.
//!
//! [`QueueState`] is a pure fold over decisions; the service, log replay and
//! export all go through [`QueueState::apply`], so the state after a log
//! prefix is exactly the state the live service had at that point.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use kbalign_core::candgen::CandidateList;
use kbalign_core::corpus::{AliasTerm, AlignmentRecord, Concept, Cui, Qid, WikiEntity};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
    Skip,
    NoneOfThese,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [Verdict::Accept, Verdict::Reject, Verdict::Skip, Verdict::NoneOfThese];

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
            Verdict::Skip => "skip",
            Verdict::NoneOfThese => "none_of_these",
        }
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown verdict {s:?}")))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One line of the decision log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub cui: Cui,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qid: Option<Qid>,
    pub verdict: Verdict,
    pub annotator: String,
    /// UTC seconds.
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateDetail {
    pub qid: Qid,
    pub title: String,
    pub aliases: Vec<AliasTerm>,
    pub score: f64,
    pub rank: usize,
}

/// A concept of the run with its ranked candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub concept: Concept,
    pub candidates: Vec<CandidateDetail>,
}

impl Entry {
    fn candidate(&self, qid: Qid) -> Option<&CandidateDetail> {
        self.candidates.iter().find(|c| c.qid == qid)
    }

    pub fn allowed_verdicts(&self) -> Vec<Verdict> {
        if self.candidates.is_empty() {
            vec![Verdict::Skip, Verdict::NoneOfThese]
        } else {
            Verdict::ALL.to_vec()
        }
    }
}

/// The loaded run: every concept under review with candidate details,
/// ordered by cui. Immutable once built.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    entries: BTreeMap<Cui, Entry>,
}

impl Catalog {
    /// Joins candidate lists with the concept and entity records they refer
    /// to. Every list must name a known concept and known entities.
    pub fn new(concepts: &[Concept], entities: &[WikiEntity], lists: &[CandidateList]) -> Result<Self> {
        let concepts: HashMap<&Cui, &Concept> = concepts.iter().map(|c| (&c.cui, c)).collect();
        let entities: HashMap<Qid, &WikiEntity> = entities.iter().map(|e| (e.qid, e)).collect();
        let mut entries = BTreeMap::new();
        for list in lists {
            let concept = concepts
                .get(&list.cui)
                .ok_or_else(|| Error::Load(format!("candidates for unknown concept {}", list.cui)))?;
            let candidates = list
                .candidates
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let e = entities.get(&c.qid).ok_or_else(|| {
                        Error::Load(format!("candidate {} of {} is not a known entity", c.qid, list.cui))
                    })?;
                    Ok(CandidateDetail {
                        qid: c.qid,
                        title: e.title.clone(),
                        aliases: e.aliases.clone(),
                        score: c.score,
                        rank: i + 1,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let entry = Entry {
                concept: (*concept).clone(),
                candidates,
            };
            if entries.insert(list.cui.clone(), entry).is_some() {
                return Err(Error::Load(format!("two candidate lists for {}", list.cui)));
            }
        }
        Ok(Catalog { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, cui: &Cui) -> Option<&Entry> {
        self.entries.get(cui)
    }

    pub fn entries(&self) -> impl Iterator<Item = &Entry> {
        self.entries.values()
    }

    /// Checks a decision against the run. Accept and reject need one of the
    /// concept's candidates; none_of_these takes no qid; skip may name a
    /// candidate.
    pub fn validate(&self, d: &Decision) -> Result<()> {
        let entry = self
            .get(&d.cui)
            .ok_or_else(|| Error::NotFound(format!("unknown cui {}", d.cui)))?;
        if d.annotator.trim().is_empty() {
            return Err(Error::Validation("annotator must not be empty".into()));
        }
        match (d.verdict, d.qid) {
            (Verdict::Accept | Verdict::Reject, None) => {
                Err(Error::Validation(format!("{} requires a qid", d.verdict)))
            }
            (Verdict::NoneOfThese, Some(_)) => Err(Error::Validation("none_of_these takes no qid".into())),
            (_, Some(q)) if entry.candidate(q).is_none() => {
                Err(Error::Validation(format!("{q} is not a candidate for {}", d.cui)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Resolution {
    Accept { qid: Qid },
    NoneOfThese,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Done,
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(Status::Pending),
            "done" => Ok(Status::Done),
            _ => Err(Error::Validation(format!("unknown status {s:?}"))),
        }
    }
}

/// Per-concept resolutions folded from the decision history.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueueState {
    resolutions: BTreeMap<Cui, Resolution>,
    applied: usize,
}

impl QueueState {
    /// Folds one (already validated) decision. A later accept replaces an
    /// earlier one; reject only revokes an accept of the same qid; skip
    /// changes nothing.
    pub fn apply(&mut self, d: &Decision) {
        self.applied += 1;
        match (d.verdict, d.qid) {
            (Verdict::Accept, Some(qid)) => {
                self.resolutions.insert(d.cui.clone(), Resolution::Accept { qid });
            }
            (Verdict::NoneOfThese, _) => {
                self.resolutions.insert(d.cui.clone(), Resolution::NoneOfThese);
            }
            (Verdict::Reject, Some(qid)) if self.resolutions.get(&d.cui) == Some(&Resolution::Accept { qid }) => {
                self.resolutions.remove(&d.cui);
            }
            _ => {}
        }
    }

    pub fn from_decisions<'a>(decisions: impl IntoIterator<Item = &'a Decision>) -> Self {
        let mut s = QueueState::default();
        for d in decisions {
            s.apply(d);
        }
        s
    }

    /// Number of decisions folded in.
    pub fn applied(&self) -> usize {
        self.applied
    }

    pub fn resolution(&self, cui: &Cui) -> Option<Resolution> {
        self.resolutions.get(cui).copied()
    }

    pub fn status(&self, cui: &Cui) -> Status {
        if self.resolutions.contains_key(cui) {
            Status::Done
        } else {
            Status::Pending
        }
    }

    pub fn resolutions(&self) -> &BTreeMap<Cui, Resolution> {
        &self.resolutions
    }
}

/// Accepted alignments in alignment-record format, ordered by cui.
pub fn export_alignments(catalog: &Catalog, state: &QueueState) -> Vec<AlignmentRecord> {
    state
        .resolutions
        .iter()
        .filter_map(|(cui, r)| match r {
            Resolution::Accept { qid } => {
                let entry = catalog.get(cui)?;
                let cand = entry.candidate(*qid)?;
                Some(AlignmentRecord {
                    cui: cui.clone(),
                    qid: *qid,
                    concept_aliases: entry.concept.aliases.clone(),
                    wiki_title: cand.title.clone(),
                    wiki_aliases: cand.aliases.clone(),
                })
            }
            Resolution::NoneOfThese => None,
        })
        .collect()
}
