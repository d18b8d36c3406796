use std::collections::{BTreeMap, HashMap};

use super::{transactions, MinSupport, SupportTable};
use crate::corpus::{Corpus, KeywordId};
use crate::error::Result;

/// Level-wise Apriori: frequent singletons, then candidate pairs joined from them.
pub fn mine_apriori(corpus: &Corpus, min_support: MinSupport) -> Result<SupportTable> {
    min_support.validate()?;
    let tx = transactions(corpus)?;
    let total = tx.len() as u64;
    let min_count = min_support.min_count(total);

    let mut counts = vec![0u64; corpus.keyword_count()];
    for t in &tx {
        for k in t.iter() {
            counts[k.index()] += 1;
        }
    }
    let frequent: Vec<bool> = counts.iter().map(|&c| c >= min_count).collect();
    let singletons: BTreeMap<KeywordId, u64> = counts
        .iter()
        .enumerate()
        .filter(|&(i, _)| frequent[i])
        .map(|(i, &c)| (KeywordId(i as u32), c))
        .collect();

    // Every pair of frequent singletons is a candidate; infrequent items are pruned
    // from each transaction before pairing.
    let mut pair_counts: HashMap<(KeywordId, KeywordId), u64> = HashMap::new();
    let mut items = Vec::new();
    for t in &tx {
        items.clear();
        items.extend(t.iter().copied().filter(|k| frequent[k.index()]));
        for (i, &a) in items.iter().enumerate() {
            for &b in &items[i + 1..] {
                *pair_counts.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    let pairs = pair_counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();

    Ok(SupportTable {
        keywords: corpus.keyword_table().to_vec(),
        total,
        singletons,
        pairs,
    })
}
