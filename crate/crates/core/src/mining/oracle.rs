use std::collections::BTreeMap;

use super::{transactions, MinSupport, SupportTable};
use crate::corpus::{Corpus, KeywordId};
use crate::error::{Error, Result};

const MAX_ORACLE_KEYWORDS: usize = 20;

/// Exhaustive reference miner: every keyword and keyword pair is counted by a full scan.
pub fn mine_bruteforce(corpus: &Corpus, min_support: MinSupport) -> Result<SupportTable> {
    min_support.validate()?;
    let n = corpus.keyword_count();
    if n > MAX_ORACLE_KEYWORDS {
        return Err(Error::OracleTooLarge(n));
    }
    let tx = transactions(corpus)?;
    let total = tx.len() as u64;
    let min_count = min_support.min_count(total);
    let has = |t: &[KeywordId], k: KeywordId| t.contains(&k);

    let mut singletons = BTreeMap::new();
    let mut pairs = BTreeMap::new();
    for a in 0..n {
        let ka = KeywordId(a as u32);
        let count = tx.iter().filter(|t| has(t, ka)).count() as u64;
        if count >= min_count {
            singletons.insert(ka, count);
        }
        for b in a + 1..n {
            let kb = KeywordId(b as u32);
            let count = tx.iter().filter(|t| has(t, ka) && has(t, kb)).count() as u64;
            if count >= min_count {
                pairs.insert((ka, kb), count);
            }
        }
    }
    Ok(SupportTable {
        keywords: corpus.keyword_table().to_vec(),
        total,
        singletons,
        pairs,
    })
}
