use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{tokenize, Field};
use crate::corpus::{Qid, WikiEntity};
use crate::error::{Error, Result};

/// File header of a persisted index.
pub const INDEX_MAGIC: [u8; 8] = *b"KBIDX\0\x01\0";
pub const INDEX_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Postings and length statistics for one field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldIndex {
    field: Field,
    postings: HashMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    docs_with_field: u32,
    total_length: u64,
}

impl FieldIndex {
    fn new(field: Field, n_docs: usize) -> Self {
        FieldIndex {
            field,
            postings: HashMap::new(),
            doc_lengths: vec![0; n_docs],
            docs_with_field: 0,
            total_length: 0,
        }
    }

    fn add_doc(&mut self, doc: u32, tokens: Option<Vec<String>>) {
        let Some(tokens) = tokens else { return };
        self.docs_with_field += 1;
        self.doc_lengths[doc as usize] = tokens.len() as u32;
        self.total_length += tokens.len() as u64;
        let mut tf: HashMap<String, u32> = HashMap::new();
        for t in tokens {
            *tf.entry(t).or_default() += 1;
        }
        // docs arrive in ordinal order, so every list stays sorted
        for (term, count) in tf {
            self.postings.entry(term).or_default().push(Posting { doc, tf: count });
        }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn doc_length(&self, doc: u32) -> u32 {
        self.doc_lengths[doc as usize]
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    /// Mean length over the documents that have this field.
    pub fn avg_length(&self) -> f64 {
        if self.docs_with_field == 0 {
            0.0
        } else {
            self.total_length as f64 / self.docs_with_field as f64
        }
    }

    pub fn docs_with_field(&self) -> u32 {
        self.docs_with_field
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &[Posting])> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.as_slice()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvertedIndex {
    doc_table: Vec<Qid>,
    fields: Vec<FieldIndex>,
}

fn field_tokens(entity: &WikiEntity, field: Field) -> Option<Vec<String>> {
    match field {
        Field::Title => Some(tokenize(&entity.title)),
        Field::Text => entity.text.as_deref().map(tokenize),
        Field::Aliases => Some(entity.aliases.iter().flat_map(|a| tokenize(&a.text)).collect()),
    }
}

/// Indexes `entities` over `fields`. Document ordinals follow input order.
pub fn build_index(entities: &[WikiEntity], fields: &[Field]) -> Result<InvertedIndex> {
    if entities.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let fields: BTreeSet<Field> = fields.iter().copied().collect();
    if fields.is_empty() {
        return Err(Error::InvalidArgument("no fields to index".into()));
    }
    let n = entities.len();
    let mut field_indexes: Vec<FieldIndex> = fields.iter().map(|&f| FieldIndex::new(f, n)).collect();
    for (ord, entity) in entities.iter().enumerate() {
        for fi in &mut field_indexes {
            fi.add_doc(ord as u32, field_tokens(entity, fi.field));
        }
    }
    Ok(InvertedIndex {
        doc_table: entities.iter().map(|e| e.qid).collect(),
        fields: field_indexes,
    })
}

impl InvertedIndex {
    pub fn n_docs(&self) -> usize {
        self.doc_table.len()
    }

    pub fn qid(&self, doc: u32) -> Qid {
        self.doc_table[doc as usize]
    }

    pub fn doc_table(&self) -> &[Qid] {
        &self.doc_table
    }

    pub fn fields(&self) -> &[FieldIndex] {
        &self.fields
    }

    pub fn field(&self, field: Field) -> Option<&FieldIndex> {
        self.fields.iter().find(|f| f.field == field)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Serializes as magic, version byte, then three length-prefixed
    /// sections (doc table, field statistics, postings). Integers are
    /// little-endian; terms are written in sorted order.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&INDEX_MAGIC)?;
        w.write_all(&[INDEX_VERSION])?;

        let mut docs = Vec::with_capacity(4 + 8 * self.doc_table.len());
        put_u32(&mut docs, self.doc_table.len() as u32);
        for q in &self.doc_table {
            docs.extend_from_slice(&q.number().to_le_bytes());
        }
        write_section(w, &docs)?;

        let mut stats = Vec::new();
        stats.push(self.fields.len() as u8);
        for f in &self.fields {
            stats.push(f.field.code());
            put_u32(&mut stats, f.docs_with_field);
            stats.extend_from_slice(&f.total_length.to_le_bytes());
            put_u32(&mut stats, f.doc_lengths.len() as u32);
            for &len in &f.doc_lengths {
                put_u32(&mut stats, len);
            }
        }
        write_section(w, &stats)?;

        let mut post = Vec::new();
        post.push(self.fields.len() as u8);
        for f in &self.fields {
            post.push(f.field.code());
            let mut terms: Vec<_> = f.postings.iter().collect();
            terms.sort_unstable_by(|a, b| a.0.cmp(b.0));
            put_u32(&mut post, terms.len() as u32);
            for (term, list) in terms {
                put_u32(&mut post, term.len() as u32);
                post.extend_from_slice(term.as_bytes());
                put_u32(&mut post, list.len() as u32);
                for p in list {
                    put_u32(&mut post, p.doc);
                    put_u32(&mut post, p.tf);
                }
            }
        }
        write_section(w, &post)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 9];
        r.read_exact(&mut header)
            .map_err(|_| Error::IndexFormat("truncated header".into()))?;
        if header[..8] != INDEX_MAGIC {
            return Err(Error::IndexFormat("bad magic".into()));
        }
        if header[8] != INDEX_VERSION {
            return Err(Error::IndexFormat(format!("unsupported version {}", header[8])));
        }

        let docs = read_section(&mut r)?;
        let mut c = Cursor::new(&docs);
        let n = c.u32()? as usize;
        let doc_table = (0..n).map(|_| c.u64().map(Qid::new)).collect::<Result<Vec<_>>>()?;
        c.finish()?;

        let stats = read_section(&mut r)?;
        let mut c = Cursor::new(&stats);
        let n_fields = c.u8()?;
        let mut fields = Vec::with_capacity(n_fields as usize);
        for _ in 0..n_fields {
            let field = Field::from_code(c.u8()?).ok_or_else(|| Error::IndexFormat("unknown field code".into()))?;
            let docs_with_field = c.u32()?;
            let total_length = c.u64()?;
            let len = c.u32()? as usize;
            if len != n {
                return Err(Error::IndexFormat("doc length table size mismatch".into()));
            }
            let doc_lengths = (0..len).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
            fields.push(FieldIndex {
                field,
                postings: HashMap::new(),
                doc_lengths,
                docs_with_field,
                total_length,
            });
        }
        c.finish()?;

        let post = read_section(&mut r)?;
        let mut c = Cursor::new(&post);
        if c.u8()? != n_fields {
            return Err(Error::IndexFormat("field count mismatch".into()));
        }
        for fi in &mut fields {
            if Field::from_code(c.u8()?) != Some(fi.field) {
                return Err(Error::IndexFormat("field order mismatch".into()));
            }
            let n_terms = c.u32()?;
            for _ in 0..n_terms {
                let len = c.u32()? as usize;
                let term = std::str::from_utf8(c.bytes(len)?)
                    .map_err(|_| Error::IndexFormat("term is not utf-8".into()))?
                    .to_owned();
                let n_post = c.u32()? as usize;
                let mut list = Vec::with_capacity(n_post);
                for _ in 0..n_post {
                    let doc = c.u32()?;
                    if doc as usize >= n {
                        return Err(Error::IndexFormat("posting ordinal out of range".into()));
                    }
                    list.push(Posting { doc, tf: c.u32()? });
                }
                fi.postings.insert(term, list);
            }
        }
        c.finish()?;

        Ok(InvertedIndex { doc_table, fields })
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn write_section<W: Write>(w: &mut W, payload: &[u8]) -> Result<()> {
    w.write_all(&(payload.len() as u64).to_le_bytes())?;
    w.write_all(payload)?;
    Ok(())
}

fn read_section<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| Error::IndexFormat("truncated section header".into()))?;
    let len = u64::from_le_bytes(len);
    let mut payload = Vec::new();
    r.take(len).read_to_end(&mut payload)?;
    if payload.len() as u64 != len {
        return Err(Error::IndexFormat("truncated section".into()));
    }
    Ok(payload)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::IndexFormat("section overrun".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::IndexFormat("trailing bytes in section".into()))
        }
    }
}
