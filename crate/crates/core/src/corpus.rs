//! Keyword-annotated image records for targets and background candidates.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Dense index into a corpus keyword table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordId(pub u32);

impl KeywordId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for KeywordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Background,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    pub role: Role,
    /// Sorted, duplicate-free.
    pub keywords: Vec<KeywordId>,
    /// Present iff `role == Role::Target`; always a member of `keywords`.
    pub foreground: Option<KeywordId>,
}

impl ImageRecord {
    pub fn contains(&self, k: KeywordId) -> bool {
        self.keywords.binary_search(&k).is_ok()
    }
}

/// Canonical keyword form: trimmed, lowercase, internal whitespace collapsed to one space.
pub fn normalize_keyword(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// One line of a corpus file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub role: Role,
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub foreground: Option<String>,
}

/// An interned, validated set of image records. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    keyword_table: Vec<String>,
    keyword_index: HashMap<String, KeywordId>,
    records: Vec<ImageRecord>,
    record_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn builder() -> CorpusBuilder {
        CorpusBuilder::default()
    }

    /// Interns raw records in order. Keyword ids follow first appearance.
    pub fn from_raw(raw: impl IntoIterator<Item = RawRecord>) -> Result<Corpus> {
        let mut b = CorpusBuilder::default();
        for r in raw {
            b.push_raw(r)?;
        }
        b.build()
    }

    pub fn keyword_table(&self) -> &[String] {
        &self.keyword_table
    }

    pub fn keyword_count(&self) -> usize {
        self.keyword_table.len()
    }

    pub fn keyword(&self, id: KeywordId) -> &str {
        &self.keyword_table[id.index()]
    }

    /// Looks up a keyword after normalization.
    pub fn keyword_id(&self, raw: &str) -> Option<KeywordId> {
        self.keyword_index.get(&normalize_keyword(raw)).copied()
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn record(&self, image_id: &str) -> Result<&ImageRecord> {
        self.record_index
            .get(image_id)
            .map(|&i| &self.records[i])
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))
    }

    /// The keyword set of an image.
    pub fn keyword_set(&self, image_id: &str) -> Result<&[KeywordId]> {
        self.record(image_id).map(|r| r.keywords.as_slice())
    }

    pub fn targets(&self) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(|r| r.role == Role::Target)
    }

    pub fn backgrounds(&self) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(|r| r.role == Role::Background)
    }

    pub fn target_count(&self) -> usize {
        self.targets().count()
    }

    pub fn background_count(&self) -> usize {
        self.backgrounds().count()
    }

    /// Keeps only records of `role`; the keyword table is left untouched so ids stay stable.
    pub fn filter_role(&self, role: Role) -> Corpus {
        let records: Vec<ImageRecord> = self
            .records
            .iter()
            .filter(|r| r.role == role)
            .cloned()
            .collect();
        let record_index = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id.clone(), i))
            .collect();
        Corpus {
            keyword_table: self.keyword_table.clone(),
            keyword_index: self.keyword_index.clone(),
            records,
            record_index,
        }
    }

    pub fn to_raw(&self) -> Vec<RawRecord> {
        self.records
            .iter()
            .map(|r| RawRecord {
                id: r.image_id.clone(),
                role: r.role,
                keywords: r.keywords.iter().map(|&k| self.keyword(k).to_string()).collect(),
                foreground: r.foreground.map(|k| self.keyword(k).to_string()),
            })
            .collect()
    }

    /// Writes one record per line with keywords in id order, so loading the
    /// output reproduces the same interning.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_jsonl(path, self.to_raw().iter())
    }
}

/// Loads a corpus file, optionally keeping only one role.
pub fn load_corpus(path: &Path, role_filter: Option<Role>) -> Result<Corpus> {
    let raw: Vec<RawRecord> = io::read_jsonl(path)?;
    let mut b = CorpusBuilder::default();
    for (i, r) in raw.into_iter().enumerate() {
        b.push_raw(r).map_err(|e| match e {
            Error::Data(message) | Error::Invalid(message) => Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            },
            other => other,
        })?;
    }
    let corpus = b.build()?;
    Ok(match role_filter {
        Some(role) => corpus.filter_role(role),
        None => corpus,
    })
}

#[derive(Debug, Default)]
pub struct CorpusBuilder {
    corpus: Corpus,
}

impl CorpusBuilder {
    fn intern(&mut self, raw: &str) -> Result<KeywordId> {
        let key = normalize_keyword(raw);
        if key.is_empty() {
            return Err(Error::Data("blank keyword".into()));
        }
        if let Some(&id) = self.corpus.keyword_index.get(&key) {
            return Ok(id);
        }
        let id = KeywordId(self.corpus.keyword_table.len() as u32);
        self.corpus.keyword_table.push(key.clone());
        self.corpus.keyword_index.insert(key, id);
        Ok(id)
    }

    pub fn push_raw(&mut self, raw: RawRecord) -> Result<&mut Self> {
        if raw.id.is_empty() {
            return Err(Error::Data("empty image id".into()));
        }
        if self.corpus.record_index.contains_key(&raw.id) {
            return Err(Error::DuplicateImage(raw.id));
        }
        if raw.keywords.is_empty() {
            return Err(Error::Data(format!("image {:?} has no keywords", raw.id)));
        }
        let mut keywords = raw
            .keywords
            .iter()
            .map(|k| self.intern(k))
            .collect::<Result<Vec<_>>>()?;
        keywords.sort_unstable();
        keywords.dedup();

        let foreground = match (raw.role, raw.foreground.as_deref()) {
            (Role::Target, None) => return Err(Error::MissingForeground(raw.id)),
            (Role::Target, Some(fg)) => {
                let key = normalize_keyword(fg);
                let id = self
                    .corpus
                    .keyword_index
                    .get(&key)
                    .copied()
                    .filter(|id| keywords.binary_search(id).is_ok())
                    .ok_or_else(|| {
                        Error::Data(format!(
                            "foreground {key:?} of target {:?} is not among its keywords",
                            raw.id
                        ))
                    })?;
                Some(id)
            }
            (Role::Background, Some(_)) => {
                return Err(Error::Data(format!(
                    "background {:?} must not declare a foreground",
                    raw.id
                )))
            }
            (Role::Background, None) => None,
        };

        self.corpus
            .record_index
            .insert(raw.id.clone(), self.corpus.records.len());
        self.corpus.records.push(ImageRecord {
            image_id: raw.id,
            role: raw.role,
            keywords,
            foreground,
        });
        Ok(self)
    }

    /// Convenience for tests and generators.
    pub fn add(
        &mut self,
        id: &str,
        role: Role,
        keywords: &[&str],
        foreground: Option<&str>,
    ) -> Result<&mut Self> {
        self.push_raw(RawRecord {
            id: id.to_string(),
            role,
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            foreground: foreground.map(str::to_string),
        })
    }

    pub fn background(&mut self, id: &str, keywords: &[&str]) -> Result<&mut Self> {
        self.add(id, Role::Background, keywords, None)
    }

    pub fn target(&mut self, id: &str, keywords: &[&str], foreground: &str) -> Result<&mut Self> {
        self.add(id, Role::Target, keywords, Some(foreground))
    }

    pub fn build(self) -> Result<Corpus> {
        if self.corpus.records.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(self.corpus)
    }
}
