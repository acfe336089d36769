//! Concepts, entities and the gold alignment between them.
//!
//! A [`Concept`] is a vocabulary entry identified by a CUI and carrying a
//! multilingual alias set; it is the query side of the alignment. A
//! [`WikiEntity`] is a collection entry identified by a QID with a page title,
//! multilingual aliases and optional page text; it is the document side.

mod dataset;
mod io;
mod wikidata;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use dataset::{build_alignment_dataset, AlignmentDataset, DatasetOptions, SplitName, DEFAULT_RATIOS};
pub use io::{
    parse_alignments, parse_concepts, parse_entities, read_alignments, read_concepts, read_entities, write_jsonl,
    write_jsonl_file,
};
pub use wikidata::{extract_wikidata_entities, ExtractStats, WikidataExtractor, DEFAULT_CUI_PROPERTY};

/// The languages aliases may be tagged with, in canonical order.
pub const SUPPORTED_LANGUAGES: [&str; 24] = [
    "en", "es", "it", "nl", "fr", "pt", "de", "cs", "ru", "zh", "ja", "hu", "tr", "ko", "no", "et", "sv", "pl", "fi",
    "el", "lv", "da", "eu", "he",
];

const UND: u8 = SUPPORTED_LANGUAGES.len() as u8;

/// NFKC normalization followed by whitespace trimming. Case is preserved.
pub fn normalize_text(text: &str) -> String {
    let normalized: String = text.nfkc().collect();
    normalized.trim().to_owned()
}

/// A language tag: one of [`SUPPORTED_LANGUAGES`] or `und`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LangTag(u8);

impl LangTag {
    pub const EN: LangTag = LangTag(0);
    pub const UND: LangTag = LangTag(UND);

    pub fn code(self) -> &'static str {
        SUPPORTED_LANGUAGES.get(self.0 as usize).copied().unwrap_or("und")
    }

    /// False only for `und`.
    pub fn is_determined(self) -> bool {
        self.0 != UND
    }

    pub fn all_supported() -> impl Iterator<Item = LangTag> {
        (0..UND).map(LangTag)
    }
}

impl FromStr for LangTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "und" {
            return Ok(LangTag::UND);
        }
        SUPPORTED_LANGUAGES
            .iter()
            .position(|code| *code == s)
            .map(|i| LangTag(i as u8))
            .ok_or_else(|| Error::InvalidLang(s.to_owned()))
    }
}

impl TryFrom<String> for LangTag {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LangTag> for String {
    fn from(tag: LangTag) -> String {
        tag.code().to_owned()
    }
}

impl fmt::Display for LangTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl fmt::Debug for LangTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Concept identifier: `C` followed by exactly seven digits.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Cui(String);

impl Cui {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Cui {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let valid = s.len() == 8 && s.starts_with('C') && s[1..].bytes().all(|b| b.is_ascii_digit());
        if valid {
            Ok(Cui(s.to_owned()))
        } else {
            Err(Error::InvalidCui(s.to_owned()))
        }
    }
}

impl TryFrom<String> for Cui {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Cui> for String {
    fn from(c: Cui) -> String {
        c.0
    }
}

impl fmt::Display for Cui {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Cui {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Entity identifier `Q<n>`. Ordered by its numeric value, which is the
/// tie-break order used throughout ranking.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Qid(u64);

impl Qid {
    pub fn new(n: u64) -> Self {
        Qid(n)
    }

    pub fn number(self) -> u64 {
        self.0
    }
}

impl FromStr for Qid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .strip_prefix('Q')
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .filter(|d| d.len() == 1 || !d.starts_with('0'))
            .ok_or_else(|| Error::InvalidQid(s.to_owned()))?;
        digits.parse().map(Qid).map_err(|_| Error::InvalidQid(s.to_owned()))
    }
}

impl TryFrom<String> for Qid {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Qid> for String {
    fn from(q: Qid) -> String {
        q.to_string()
    }
}

impl fmt::Display for Qid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.0)
    }
}

impl fmt::Debug for Qid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.0)
    }
}

/// One surface name of a concept or entity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct AliasTerm {
    pub text: String,
    pub lang: LangTag,
}

impl AliasTerm {
    /// Normalizes `text` and rejects it if nothing but whitespace remains.
    pub fn new(text: &str, lang: LangTag) -> Result<Self> {
        let text = normalize_text(text);
        if text.is_empty() {
            return Err(Error::BlankAlias);
        }
        Ok(AliasTerm { text, lang })
    }
}

impl<'de> Deserialize<'de> for AliasTerm {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            text: String,
            lang: LangTag,
        }
        let raw = Raw::deserialize(de)?;
        AliasTerm::new(&raw.text, raw.lang).map_err(serde::de::Error::custom)
    }
}

/// Removes exact `(text, lang)` repeats, keeping first occurrences.
pub(crate) fn dedup_aliases(aliases: &mut Vec<AliasTerm>) {
    let mut seen = std::collections::HashSet::new();
    aliases.retain(|a| seen.insert((a.text.clone(), a.lang)));
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub cui: Cui,
    pub aliases: Vec<AliasTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
}

impl Concept {
    pub fn new(cui: Cui, mut aliases: Vec<AliasTerm>, definition: Option<String>) -> Result<Self> {
        dedup_aliases(&mut aliases);
        if aliases.is_empty() {
            return Err(Error::EmptyAliases);
        }
        Ok(Concept {
            cui,
            aliases,
            definition,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WikiEntity {
    pub qid: Qid,
    pub title: String,
    pub aliases: Vec<AliasTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub umls_cui: Option<Cui>,
}

impl WikiEntity {
    /// Builds an entity, appending the title as an English alias when no
    /// `en`/`und` alias carries it yet.
    pub fn new(
        qid: Qid,
        title: &str,
        mut aliases: Vec<AliasTerm>,
        text: Option<String>,
        umls_cui: Option<Cui>,
    ) -> Result<Self> {
        let title = normalize_text(title);
        if title.is_empty() {
            return Err(Error::BlankAlias);
        }
        dedup_aliases(&mut aliases);
        let has_title = aliases
            .iter()
            .any(|a| a.text == title && (a.lang == LangTag::EN || a.lang == LangTag::UND));
        if !has_title {
            aliases.push(AliasTerm {
                text: title.clone(),
                lang: LangTag::EN,
            });
        }
        Ok(WikiEntity {
            qid,
            title,
            aliases,
            text,
            umls_cui,
        })
    }
}

/// A gold concept/entity pair with both alias sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub cui: Cui,
    pub qid: Qid,
    pub concept_aliases: Vec<AliasTerm>,
    pub wiki_title: String,
    pub wiki_aliases: Vec<AliasTerm>,
}

impl AlignmentRecord {
    pub fn from_pair(concept: &Concept, entity: &WikiEntity) -> Self {
        AlignmentRecord {
            cui: concept.cui.clone(),
            qid: entity.qid,
            concept_aliases: concept.aliases.clone(),
            wiki_title: entity.title.clone(),
            wiki_aliases: entity.aliases.clone(),
        }
    }

    /// The query side of the record as a concept.
    pub fn concept(&self) -> Concept {
        Concept {
            cui: self.cui.clone(),
            aliases: self.concept_aliases.clone(),
            definition: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub records: Vec<AlignmentRecord>,
    pub seed: u64,
}
