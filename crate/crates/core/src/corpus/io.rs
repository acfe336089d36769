use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AliasTerm, AlignmentRecord, Concept, Cui, LangTag, Qid, WikiEntity};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct RawAlias {
    text: String,
    lang: String,
}

#[derive(Deserialize)]
struct RawConcept {
    cui: String,
    #[serde(default)]
    aliases: Vec<RawAlias>,
    #[serde(default)]
    definition: Option<String>,
}

#[derive(Deserialize)]
struct RawEntity {
    qid: String,
    title: String,
    #[serde(default)]
    aliases: Vec<RawAlias>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    umls_cui: Option<String>,
}

fn convert_aliases(raw: Vec<RawAlias>, line: usize) -> Result<Vec<AliasTerm>> {
    raw.into_iter()
        .map(|a| {
            let lang: LangTag = a
                .lang
                .parse()
                .map_err(|_| Error::record(line, format!("unsupported language {:?}", a.lang)))?;
            AliasTerm::new(&a.text, lang).map_err(|_| Error::record(line, "blank alias"))
        })
        .collect()
}

/// Iterates the non-blank lines of a stream as (1-based line number, line).
fn numbered_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, line)| line.map(|l| (i + 1, l)).map_err(Error::from))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

fn from_line<T: for<'de> Deserialize<'de>>(line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::record(line_no, format!("malformed record ({e})")))
}

/// Reads `concepts.jsonl` records in input order.
pub fn parse_concepts<R: BufRead>(reader: R) -> Result<Vec<Concept>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in numbered_lines(reader) {
        let (n, line) = item?;
        let raw: RawConcept = from_line(n, &line)?;
        let cui: Cui = raw.cui.parse().map_err(|_| Error::record(n, "invalid cui"))?;
        let aliases = convert_aliases(raw.aliases, n)?;
        let concept = Concept::new(cui, aliases, raw.definition).map_err(|_| Error::record(n, "empty alias list"))?;
        if !seen.insert(concept.cui.clone()) {
            return Err(Error::DuplicateCui(concept.cui.to_string()));
        }
        out.push(concept);
    }
    Ok(out)
}

/// Reads `entities.jsonl` records in input order.
pub fn parse_entities<R: BufRead>(reader: R) -> Result<Vec<WikiEntity>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in numbered_lines(reader) {
        let (n, line) = item?;
        let raw: RawEntity = from_line(n, &line)?;
        let qid: Qid = raw.qid.parse().map_err(|_| Error::record(n, "invalid qid"))?;
        let umls_cui = raw
            .umls_cui
            .map(|c| c.parse::<Cui>())
            .transpose()
            .map_err(|_| Error::record(n, "invalid cui"))?;
        let aliases = convert_aliases(raw.aliases, n)?;
        let entity = WikiEntity::new(qid, &raw.title, aliases, raw.text, umls_cui)
            .map_err(|_| Error::record(n, "blank title"))?;
        if !seen.insert(entity.qid) {
            return Err(Error::DuplicateQid(entity.qid.to_string()));
        }
        out.push(entity);
    }
    Ok(out)
}

/// Reads an alignment file (`alignments.jsonl` or a split file).
pub fn parse_alignments<R: BufRead>(reader: R) -> Result<Vec<AlignmentRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in numbered_lines(reader) {
        let (n, line) = item?;
        let record: AlignmentRecord = from_line(n, &line)?;
        if !seen.insert((record.cui.clone(), record.qid)) {
            return Err(Error::record(
                n,
                format!("duplicate pair ({}, {})", record.cui, record.qid),
            ));
        }
        out.push(record);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn read_concepts(path: &Path) -> Result<Vec<Concept>> {
    parse_concepts(open(path)?)
}

pub fn read_entities(path: &Path) -> Result<Vec<WikiEntity>> {
    parse_entities(open(path)?)
}

pub fn read_alignments(path: &Path) -> Result<Vec<AlignmentRecord>> {
    parse_alignments(open(path)?)
}

/// Writes one compact JSON object per line, LF-terminated.
pub fn write_jsonl<W: Write, T: Serialize>(writer: W, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    write_jsonl(File::create(path)?, items)
}
