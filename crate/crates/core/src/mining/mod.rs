//! Frequent keyword pairs, supports and directed confidences over the background corpus.
//!
//! Three miners share one contract: [`mine_apriori`], [`mine_fpgrowth`] and the
//! exhaustive [`mine_bruteforce`] oracle. Enumeration stops at itemsets of size two.
//! Supports are kept as integer counts over a total; fractions are derived on demand.

mod apriori;
mod fpgrowth;
mod oracle;

use std::collections::BTreeMap;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, KeywordId};
use crate::error::{Error, Result};
use crate::io;
use crate::scalar::Scalar;

pub use apriori::mine_apriori;
pub use fpgrowth::mine_fpgrowth;
pub use oracle::mine_bruteforce;

/// Minimum support, either as a fraction of the transaction count or an absolute count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinSupport {
    Fraction(f64),
    Count(u64),
}

impl Default for MinSupport {
    fn default() -> Self {
        MinSupport::Count(3)
    }
}

impl MinSupport {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MinSupport::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::invalid(format!("min_support must be in (0, 1], got {f}")))
            }
            MinSupport::Count(0) => Err(Error::invalid("min_support count must be >= 1")),
            _ => Ok(()),
        }
    }

    /// Smallest integer count that satisfies the threshold over `total` transactions.
    ///
    /// Fractions are compared with a 1e-9 relative slack so that e.g. 0.3 of 10
    /// admits a count of exactly 3.
    pub fn min_count(&self, total: u64) -> u64 {
        match *self {
            MinSupport::Count(c) => c.max(1),
            MinSupport::Fraction(f) => {
                let raw = f * total as f64;
                ((raw - raw.abs() * 1e-9).ceil() as u64).max(1)
            }
        }
    }
}

/// Integer support counts of frequent singletons and pairs (`a < b`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportTable {
    pub(crate) keywords: Vec<String>,
    pub(crate) total: u64,
    pub(crate) singletons: BTreeMap<KeywordId, u64>,
    pub(crate) pairs: BTreeMap<(KeywordId, KeywordId), u64>,
}

fn ordered(a: KeywordId, b: KeywordId) -> (KeywordId, KeywordId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SupportTable {
    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn total_images(&self) -> u64 {
        self.total
    }

    pub fn singleton_count(&self, k: KeywordId) -> Option<u64> {
        self.singletons.get(&k).copied()
    }

    pub fn pair_count(&self, a: KeywordId, b: KeywordId) -> Option<u64> {
        self.pairs.get(&ordered(a, b)).copied()
    }

    pub fn singleton_ratio(&self, k: KeywordId) -> Option<Ratio<u64>> {
        self.singleton_count(k).map(|c| Ratio::new(c, self.total))
    }

    pub fn pair_ratio(&self, a: KeywordId, b: KeywordId) -> Option<Ratio<u64>> {
        self.pair_count(a, b).map(|c| Ratio::new(c, self.total))
    }

    pub fn singleton_support<T: Scalar>(&self, k: KeywordId) -> Option<T> {
        self.singleton_count(k)
            .map(|c| T::of(c as f64) / T::of(self.total as f64))
    }

    pub fn pair_support<T: Scalar>(&self, a: KeywordId, b: KeywordId) -> Option<T> {
        self.pair_count(a, b)
            .map(|c| T::of(c as f64) / T::of(self.total as f64))
    }

    pub fn singletons(&self) -> impl Iterator<Item = (KeywordId, u64)> + '_ {
        self.singletons.iter().map(|(&k, &c)| (k, c))
    }

    pub fn pairs(&self) -> impl Iterator<Item = ((KeywordId, KeywordId), u64)> + '_ {
        self.pairs.iter().map(|(&p, &c)| (p, c))
    }

    pub fn to_dump(&self) -> SupportDump {
        let name = |k: KeywordId| self.keywords[k.index()].clone();
        SupportDump {
            total: self.total,
            keywords: Some(self.keywords.clone()),
            pairs: self
                .pairs
                .iter()
                .map(|(&(a, b), &count)| PairCount {
                    a: name(a),
                    b: name(b),
                    count,
                })
                .collect(),
            singletons: self
                .singletons
                .iter()
                .map(|(&k, &count)| SingletonCount { k: name(k), count })
                .collect(),
        }
    }

    /// Rebuilds a table from its dump. When the dump carries no keyword table,
    /// ids follow the order of the singleton list.
    pub fn from_dump(dump: &SupportDump) -> Result<SupportTable> {
        let keywords = match &dump.keywords {
            Some(k) => k.clone(),
            None => dump.singletons.iter().map(|s| s.k.clone()).collect(),
        };
        let index: std::collections::HashMap<&str, KeywordId> = keywords
            .iter()
            .enumerate()
            .map(|(i, k)| (k.as_str(), KeywordId(i as u32)))
            .collect();
        let id = |k: &str| {
            index
                .get(k)
                .copied()
                .ok_or_else(|| Error::UnknownKeyword(k.to_string()))
        };
        let mut singletons = BTreeMap::new();
        for s in &dump.singletons {
            singletons.insert(id(&s.k)?, s.count);
        }
        let mut pairs = BTreeMap::new();
        for p in &dump.pairs {
            let (a, b) = (id(&p.a)?, id(&p.b)?);
            if a == b {
                return Err(Error::Data(format!("self pair {:?}", p.a)));
            }
            for k in [a, b] {
                match singletons.get(&k) {
                    Some(&c) if c >= p.count => {}
                    _ => {
                        return Err(Error::Data(format!(
                            "pair ({}, {}) exceeds support of {}",
                            p.a, p.b, keywords[k.index()]
                        )))
                    }
                }
            }
            pairs.insert(ordered(a, b), p.count);
        }
        Ok(SupportTable {
            keywords,
            total: dump.total,
            singletons,
            pairs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_dump())
    }

    pub fn load(path: &Path) -> Result<SupportTable> {
        SupportTable::from_dump(&io::read_json(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub a: String,
    pub b: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingletonCount {
    pub k: String,
    pub count: u64,
}

/// Serialized form of a [`SupportTable`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportDump {
    pub total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keywords: Option<Vec<String>>,
    pub pairs: Vec<PairCount>,
    pub singletons: Vec<SingletonCount>,
}

/// Confidence of the rule `a -> b`, kept as the two counts it is a ratio of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confidence {
    pub pair_count: u64,
    pub antecedent_count: u64,
}

impl Confidence {
    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.pair_count, self.antecedent_count)
    }

    pub fn value<T: Scalar>(&self) -> T {
        T::of(self.pair_count as f64) / T::of(self.antecedent_count as f64)
    }
}

/// Directed confidences for every frequent pair, both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfidenceTable {
    pub(crate) keywords: Vec<String>,
    pub(crate) entries: BTreeMap<(KeywordId, KeywordId), Confidence>,
}

impl ConfidenceTable {
    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn get(&self, from: KeywordId, to: KeywordId) -> Option<Confidence> {
        self.entries.get(&(from, to)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((KeywordId, KeywordId), Confidence)> + '_ {
        self.entries.iter().map(|(&k, &c)| (k, c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Builds a table directly from `(from, to, confidence)` triples, e.g. for
    /// hand-made graphs. Confidences are encoded as `round(c * 1e6) / 1e6`.
    pub fn from_values(
        keywords: Vec<String>,
        entries: impl IntoIterator<Item = (KeywordId, KeywordId, f64)>,
    ) -> ConfidenceTable {
        const SCALE: u64 = 1_000_000;
        let entries = entries
            .into_iter()
            .map(|(a, b, c)| {
                let conf = Confidence {
                    pair_count: (c * SCALE as f64).round() as u64,
                    antecedent_count: SCALE,
                };
                ((a, b), conf)
            })
            .collect();
        ConfidenceTable { keywords, entries }
    }
}

/// confidence(a -> b) = support({a, b}) / support(a), emitted for both directions of every pair.
pub fn confidences(support: &SupportTable) -> ConfidenceTable {
    let mut entries = BTreeMap::new();
    for (&(a, b), &pair_count) in &support.pairs {
        for (from, to) in [(a, b), (b, a)] {
            let antecedent_count = support.singletons[&from];
            entries.insert(
                (from, to),
                Confidence {
                    pair_count,
                    antecedent_count,
                },
            );
        }
    }
    ConfidenceTable {
        keywords: support.keywords.clone(),
        entries,
    }
}

/// Background transactions of a corpus, each a sorted keyword slice.
pub(crate) fn transactions(corpus: &Corpus) -> Result<Vec<&[KeywordId]>> {
    let tx: Vec<&[KeywordId]> = corpus.backgrounds().map(|r| r.keywords.as_slice()).collect();
    if tx.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(tx)
}
