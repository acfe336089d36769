//! Streaming extraction of entities from a Wikidata JSON dump.
//!
//! The dump is a JSON array with one entity object per line; lines carry a
//! trailing comma and the first and last lines are `[` and `]`. Each line is
//! parsed on its own so memory stays bounded by the largest record.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead};

use serde::Deserialize;
use serde_json::Value;
use tracing::debug;

use super::{AliasTerm, Cui, LangTag, Qid, WikiEntity};

/// Wikidata property holding the UMLS CUI external identifier.
pub const DEFAULT_CUI_PROPERTY: &str = "P2892";

const ENGLISH_SITE: &str = "enwiki";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExtractStats {
    pub records: u64,
    pub emitted: u64,
    pub malformed: u64,
    pub without_sitelink: u64,
    pub invalid_cui: u64,
}

#[derive(Deserialize)]
struct LangValue {
    value: String,
}

#[derive(Deserialize)]
struct Sitelink {
    title: String,
}

#[derive(Deserialize)]
struct RawItem {
    id: String,
    #[serde(default)]
    labels: BTreeMap<String, LangValue>,
    #[serde(default)]
    aliases: BTreeMap<String, Vec<LangValue>>,
    #[serde(default)]
    claims: serde_json::Map<String, Value>,
    #[serde(default)]
    sitelinks: BTreeMap<String, Sitelink>,
}

/// Maps a Wikidata language code onto a supported tag. Regional and script
/// variants (`zh-hans`, `pt-br`) fold to their base language and Norwegian
/// Bokmål/Nynorsk fold to `no`.
fn map_language(code: &str) -> Option<LangTag> {
    let base = code.split('-').next().unwrap_or(code);
    let base = match base {
        "nb" | "nn" => "no",
        other => other,
    };
    base.parse().ok()
}

/// Iterator over the entities of a dump. Unparseable records are skipped and
/// counted in [`WikidataExtractor::stats`].
pub struct WikidataExtractor<R> {
    reader: R,
    languages: BTreeSet<LangTag>,
    cui_property: String,
    buf: Vec<u8>,
    stats: ExtractStats,
}

pub fn extract_wikidata_entities<R: BufRead>(
    reader: R,
    languages: impl IntoIterator<Item = LangTag>,
    cui_property: &str,
) -> WikidataExtractor<R> {
    WikidataExtractor {
        reader,
        languages: languages.into_iter().collect(),
        cui_property: cui_property.to_owned(),
        buf: Vec::new(),
        stats: ExtractStats::default(),
    }
}

impl<R: BufRead> WikidataExtractor<R> {
    pub fn stats(&self) -> &ExtractStats {
        &self.stats
    }

    fn convert(&mut self, item: RawItem) -> Option<WikiEntity> {
        let qid: Qid = match item.id.parse() {
            Ok(q) => q,
            Err(_) => {
                // properties and lexemes have non-Q ids
                self.stats.malformed += 1;
                return None;
            }
        };
        let Some(title) = item.sitelinks.get(ENGLISH_SITE).map(|s| s.title.clone()) else {
            self.stats.without_sitelink += 1;
            return None;
        };

        let mut aliases = Vec::new();
        if let Ok(t) = AliasTerm::new(&title, LangTag::EN) {
            aliases.push(t);
        }
        for &tag in &self.languages {
            let labels = item
                .labels
                .iter()
                .filter(|(code, _)| map_language(code) == Some(tag))
                .map(|(_, v)| v);
            let extra = item
                .aliases
                .iter()
                .filter(|(code, _)| map_language(code) == Some(tag))
                .flat_map(|(_, vs)| vs.iter());
            for v in labels.chain(extra) {
                if let Ok(a) = AliasTerm::new(&v.value, tag) {
                    aliases.push(a);
                }
            }
        }

        let umls_cui = self.find_cui(&item.claims);
        match WikiEntity::new(qid, &title, aliases, None, umls_cui) {
            Ok(e) => Some(e),
            Err(_) => {
                self.stats.malformed += 1;
                None
            }
        }
    }

    fn find_cui(&mut self, claims: &serde_json::Map<String, Value>) -> Option<Cui> {
        let statements = claims.get(&self.cui_property)?.as_array()?;
        let mut saw_value = false;
        for statement in statements {
            let value = statement.pointer("/mainsnak/datavalue/value").and_then(Value::as_str);
            if let Some(v) = value {
                saw_value = true;
                if let Ok(cui) = v.trim().parse::<Cui>() {
                    return Some(cui);
                }
            }
        }
        if saw_value {
            self.stats.invalid_cui += 1;
        }
        None
    }
}

impl<R: BufRead> Iterator for WikidataExtractor<R> {
    type Item = io::Result<WikiEntity>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e)),
            }
            let Ok(line) = std::str::from_utf8(&self.buf) else {
                self.stats.records += 1;
                self.stats.malformed += 1;
                continue;
            };
            let line = line.trim();
            let line = line.strip_suffix(',').unwrap_or(line);
            if line.is_empty() || line == "[" || line == "]" {
                continue;
            }
            self.stats.records += 1;
            let item: RawItem = match serde_json::from_str(line) {
                Ok(item) => item,
                Err(e) => {
                    debug!(record = self.stats.records, error = %e, "skipping unparseable record");
                    self.stats.malformed += 1;
                    continue;
                }
            };
            if let Some(entity) = self.convert(item) {
                self.stats.emitted += 1;
                return Some(Ok(entity));
            }
        }
    }
}
