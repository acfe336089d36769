use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{AliasTerm, LangTag};
use crate::error::{Error, Result};

pub const PASSAGE_SEPARATOR: &str = ", ";

/// An alias set rendered as one text passage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub text: String,
    pub langs: Vec<LangTag>,
}

impl Passage {
    /// The alias texts the passage was joined from.
    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.text.split(PASSAGE_SEPARATOR).filter(|s| !s.is_empty())
    }
}

/// Joins alias texts with `", "` in source order, dropping case-insensitive
/// repeats. `langs` lists each language once, in order of first appearance.
pub fn build_passage(aliases: &[AliasTerm]) -> Result<Passage> {
    if aliases.is_empty() {
        return Err(Error::EmptyAliases);
    }
    let mut seen = HashSet::new();
    let mut parts = Vec::new();
    let mut langs = Vec::new();
    for alias in aliases {
        if !langs.contains(&alias.lang) {
            langs.push(alias.lang);
        }
        if seen.insert(alias.text.to_lowercase()) {
            parts.push(alias.text.as_str());
        }
    }
    Ok(Passage {
        text: parts.join(PASSAGE_SEPARATOR),
        langs,
    })
}
