use std::collections::{BTreeMap, HashMap};

use super::{transactions, MinSupport, SupportTable};
use crate::corpus::{Corpus, KeywordId};
use crate::error::Result;

const ROOT: usize = 0;

#[derive(Debug)]
struct Node {
    item: KeywordId,
    count: u64,
    parent: usize,
    children: Vec<(KeywordId, usize)>,
    /// Next node carrying the same item.
    link: Option<usize>,
}

/// Prefix tree over frequency-ordered frequent items.
#[derive(Debug)]
struct FpTree {
    nodes: Vec<Node>,
    /// item -> first node in its link chain
    heads: HashMap<KeywordId, usize>,
}

impl FpTree {
    fn new() -> Self {
        FpTree {
            nodes: vec![Node {
                item: KeywordId(u32::MAX),
                count: 0,
                parent: ROOT,
                children: Vec::new(),
                link: None,
            }],
            heads: HashMap::new(),
        }
    }

    fn insert(&mut self, path: &[KeywordId]) {
        let mut cur = ROOT;
        for &item in path {
            let found = self.nodes[cur]
                .children
                .iter()
                .find(|&&(k, _)| k == item)
                .map(|&(_, idx)| idx);
            cur = match found {
                Some(idx) => idx,
                None => {
                    let idx = self.nodes.len();
                    let link = self.heads.insert(item, idx);
                    self.nodes.push(Node {
                        item,
                        count: 0,
                        parent: cur,
                        children: Vec::new(),
                        link,
                    });
                    self.nodes[cur].children.push((item, idx));
                    idx
                }
            };
            self.nodes[cur].count += 1;
        }
    }

    /// Counts of each item co-occurring with `item`: the single-item conditional
    /// pattern base, summed along every prefix path that ends at an `item` node.
    fn conditional_counts(&self, item: KeywordId) -> HashMap<KeywordId, u64> {
        let mut out = HashMap::new();
        let mut node = self.heads.get(&item).copied();
        while let Some(idx) = node {
            let n = &self.nodes[idx];
            let mut up = n.parent;
            while up != ROOT {
                *out.entry(self.nodes[up].item).or_insert(0) += n.count;
                up = self.nodes[up].parent;
            }
            node = n.link;
        }
        out
    }
}

/// FP-Growth truncated at pairs: one tree build, then one conditional pattern base per item.
pub fn mine_fpgrowth(corpus: &Corpus, min_support: MinSupport) -> Result<SupportTable> {
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
    // Descending frequency, ties by id, so the tree shape does not depend on record order.
    let rank = |k: KeywordId| (std::cmp::Reverse(counts[k.index()]), k);

    let mut tree = FpTree::new();
    let mut path = Vec::new();
    for t in &tx {
        path.clear();
        path.extend(t.iter().copied().filter(|k| counts[k.index()] >= min_count));
        path.sort_by_key(|&k| rank(k));
        tree.insert(&path);
    }

    let singletons: BTreeMap<KeywordId, u64> = counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c >= min_count)
        .map(|(i, &c)| (KeywordId(i as u32), c))
        .collect();

    let mut pairs = BTreeMap::new();
    for &item in singletons.keys() {
        for (other, count) in tree.conditional_counts(item) {
            if count >= min_count {
                let key = if item < other { (item, other) } else { (other, item) };
                pairs.insert(key, count);
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
