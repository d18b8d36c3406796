//! Directed, confidence-weighted keyword graph.
//!
//! Paths are ranked by hop count first, then by the product of edge confidences
//! (larger is better), then by the lexicographically smallest keyword-id sequence.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::KeywordId;
use crate::error::{Error, Result};
use crate::io;
use crate::mining::ConfidenceTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: KeywordId,
    pub confidence: f64,
    /// Co-occurrence count of the pair the edge was mined from.
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ontology {
    keywords: Vec<String>,
    /// Out-edges per keyword, sorted by target id.
    adjacency: Vec<Vec<Edge>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: u32,
    pub to: u32,
    pub confidence: f64,
    pub count: u64,
}

/// On-disk form; edges sorted by `(from, to)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyFile {
    pub keywords: Vec<String>,
    pub edges: Vec<EdgeRecord>,
}

/// Keeps every directed confidence entry at or above `min_confidence` as an edge.
pub fn build_ontology(confidence: &ConfidenceTable, min_confidence: f64) -> Result<Ontology> {
    if !(0.0..1.0).contains(&min_confidence) {
        return Err(Error::invalid(format!(
            "min_confidence must be in [0, 1), got {min_confidence}"
        )));
    }
    let mut adjacency = vec![Vec::new(); confidence.keywords().len()];
    for ((from, to), c) in confidence.iter() {
        let w = c.value::<f64>();
        if w >= min_confidence && w > 0.0 && from != to {
            adjacency[from.index()].push(Edge {
                to,
                confidence: w,
                count: c.pair_count,
            });
        }
    }
    for edges in &mut adjacency {
        edges.sort_by_key(|e| e.to);
    }
    Ok(Ontology {
        keywords: confidence.keywords().to_vec(),
        adjacency,
    })
}

impl Ontology {
    /// Builds a graph from explicit `(from, to, confidence)` edges by keyword name.
    pub fn from_named_edges<'a>(
        keywords: &[&str],
        edges: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
    ) -> Result<Ontology> {
        let index: HashMap<&str, u32> = keywords
            .iter()
            .enumerate()
            .map(|(i, k)| (*k, i as u32))
            .collect();
        let records = edges
            .into_iter()
            .map(|(a, b, w)| {
                let id = |k: &str| {
                    index
                        .get(k)
                        .copied()
                        .ok_or_else(|| Error::UnknownKeyword(k.to_string()))
                };
                Ok(EdgeRecord {
                    from: id(a)?,
                    to: id(b)?,
                    confidence: w,
                    count: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ontology::from_file(OntologyFile {
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            edges: records,
        })
    }

    pub fn from_file(file: OntologyFile) -> Result<Ontology> {
        let n = file.keywords.len();
        let mut adjacency: Vec<Vec<Edge>> = vec![Vec::new(); n];
        for e in file.edges {
            let (from, to) = (e.from as usize, e.to as usize);
            if from >= n || to >= n {
                return Err(Error::UnknownKeyword(format!("#{}", from.max(to))));
            }
            if from == to {
                return Err(Error::Data(format!("self edge on {}", file.keywords[from])));
            }
            if !(e.confidence > 0.0 && e.confidence <= 1.0) {
                return Err(Error::Data(format!(
                    "edge confidence {} outside (0, 1]",
                    e.confidence
                )));
            }
            if adjacency[from].iter().any(|x| x.to.index() == to) {
                return Err(Error::Data(format!(
                    "duplicate edge {} -> {}",
                    file.keywords[from], file.keywords[to]
                )));
            }
            adjacency[from].push(Edge {
                to: KeywordId(e.to),
                confidence: e.confidence,
                count: e.count,
            });
        }
        for edges in &mut adjacency {
            edges.sort_by_key(|e| e.to);
        }
        Ok(Ontology {
            keywords: file.keywords,
            adjacency,
        })
    }

    pub fn to_file(&self) -> OntologyFile {
        let edges = self
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(from, edges)| {
                edges.iter().map(move |e| EdgeRecord {
                    from: from as u32,
                    to: e.to.0,
                    confidence: e.confidence,
                    count: e.count,
                })
            })
            .collect();
        OntologyFile {
            keywords: self.keywords.clone(),
            edges,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_file())
    }

    pub fn load(path: &Path) -> Result<Ontology> {
        Ontology::from_file(io::read_json(path)?)
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn keyword_id(&self, name: &str) -> Option<KeywordId> {
        self.keywords
            .iter()
            .position(|k| k == name)
            .map(|i| KeywordId(i as u32))
    }

    pub fn edges_from(&self, k: KeywordId) -> &[Edge] {
        &self.adjacency[k.index()]
    }

    pub fn edge(&self, from: KeywordId, to: KeywordId) -> Option<&Edge> {
        let edges = self.edges_from(from);
        edges
            .binary_search_by_key(&to, |e| e.to)
            .ok()
            .map(|i| &edges[i])
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Drops edges below a stricter threshold without re-mining.
    pub fn with_min_confidence(&self, min_confidence: f64) -> Ontology {
        Ontology {
            keywords: self.keywords.clone(),
            adjacency: self
                .adjacency
                .iter()
                .map(|edges| {
                    edges
                        .iter()
                        .filter(|e| e.confidence >= min_confidence)
                        .copied()
                        .collect()
                })
                .collect(),
        }
    }

    /// Re-indexes the graph onto another keyword table by name. Keywords the
    /// table lacks are dropped with their edges; new ones are isolated nodes.
    pub fn reindex(&self, table: &[String]) -> Ontology {
        if table == self.keywords.as_slice() {
            return self.clone();
        }
        let index: HashMap<&str, KeywordId> = table
            .iter()
            .enumerate()
            .map(|(i, k)| (k.as_str(), KeywordId(i as u32)))
            .collect();
        let mut adjacency = vec![Vec::new(); table.len()];
        for (from, edges) in self.adjacency.iter().enumerate() {
            let Some(&nf) = index.get(self.keywords[from].as_str()) else {
                continue;
            };
            for e in edges {
                if let Some(&nt) = index.get(self.keywords[e.to.index()].as_str()) {
                    adjacency[nf.index()].push(Edge { to: nt, ..*e });
                }
            }
        }
        for edges in &mut adjacency {
            edges.sort_by_key(|e| e.to);
        }
        Ontology {
            keywords: table.to_vec(),
            adjacency,
        }
    }

    fn check(&self, k: KeywordId) -> Result<()> {
        if k.index() < self.keywords.len() {
            Ok(())
        } else {
            Err(Error::UnknownKeyword(k.to_string()))
        }
    }

    /// Best path from `source` to every reachable keyword.
    pub fn paths_from(&self, source: KeywordId) -> Result<PathTree> {
        self.check(source)?;
        let n = self.keywords.len();
        let mut hops = vec![u32::MAX; n];
        let mut aggregate = vec![0.0f64; n];
        let mut pred: Vec<Option<KeywordId>> = vec![None; n];
        // Position of each node's path in lexicographic order within its layer.
        let mut lex_rank = vec![0usize; n];

        hops[source.index()] = 0;
        aggregate[source.index()] = 1.0;
        let mut layer = vec![source];
        let mut depth = 0u32;
        while !layer.is_empty() {
            depth += 1;
            let mut next: Vec<KeywordId> = Vec::new();
            for &u in &layer {
                for e in self.edges_from(u) {
                    let v = e.to.index();
                    let cand = aggregate[u.index()] * e.confidence;
                    if hops[v] == u32::MAX {
                        hops[v] = depth;
                        aggregate[v] = cand;
                        pred[v] = Some(u);
                        next.push(e.to);
                    } else if hops[v] == depth {
                        let cur = pred[v].expect("non-source node has a predecessor");
                        if cand > aggregate[v]
                            || (cand == aggregate[v] && lex_rank[u.index()] < lex_rank[cur.index()])
                        {
                            aggregate[v] = cand;
                            pred[v] = Some(u);
                        }
                    }
                }
            }
            next.sort_by_key(|&v| {
                let p = pred[v.index()].expect("layer node has a predecessor");
                (lex_rank[p.index()], v)
            });
            for (rank, &v) in next.iter().enumerate() {
                lex_rank[v.index()] = rank;
            }
            layer = next;
        }
        Ok(PathTree {
            source,
            hops,
            aggregate,
            pred,
        })
    }

    pub fn shortest_path(&self, from: KeywordId, to: KeywordId) -> Result<Option<PathResult>> {
        self.check(to)?;
        Ok(self.paths_from(from)?.path_to(to))
    }

    /// Level-wise expansion of a keyword set along out-edges.
    pub fn expand(&self, seed: &[KeywordId], max_level: usize) -> Result<ExpansionSet> {
        for &k in seed {
            self.check(k)?;
        }
        let base: BTreeSet<KeywordId> = seed.iter().copied().collect();
        let mut levels = vec![base.clone()];
        let mut frontiers = vec![base];
        for _ in 0..max_level {
            let prev = levels.last().expect("level 0 exists");
            let frontier: BTreeSet<KeywordId> = prev
                .iter()
                .flat_map(|&k| self.edges_from(k).iter().map(|e| e.to))
                .filter(|k| !prev.contains(k))
                .collect();
            if frontier.is_empty() {
                break;
            }
            let mut next = prev.clone();
            next.extend(frontier.iter().copied());
            levels.push(next);
            frontiers.push(frontier);
        }
        Ok(ExpansionSet {
            levels,
            frontiers,
            max_level,
        })
    }
}

/// Single-source result of [`Ontology::paths_from`].
#[derive(Debug, Clone)]
pub struct PathTree {
    source: KeywordId,
    hops: Vec<u32>,
    aggregate: Vec<f64>,
    pred: Vec<Option<KeywordId>>,
}

impl PathTree {
    pub fn source(&self) -> KeywordId {
        self.source
    }

    /// `(hops, aggregate)` to `to`, or `None` when unreachable.
    pub fn cost(&self, to: KeywordId) -> Option<(u32, f64)> {
        let i = to.index();
        (self.hops[i] != u32::MAX).then(|| (self.hops[i], self.aggregate[i]))
    }

    pub fn path_to(&self, to: KeywordId) -> Option<PathResult> {
        let (hops, aggregate) = self.cost(to)?;
        let mut path = vec![to];
        let mut cur = to;
        while let Some(p) = self.pred[cur.index()] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(PathResult {
            hops: hops as usize,
            aggregate,
            path,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub hops: usize,
    /// Product of edge confidences along `path`.
    pub aggregate: f64,
    pub path: Vec<KeywordId>,
}

/// `levels[i]` is every keyword known after `i` expansions; `frontier(i)` the
/// keywords first added at step `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionSet {
    levels: Vec<BTreeSet<KeywordId>>,
    frontiers: Vec<BTreeSet<KeywordId>>,
    max_level: usize,
}

impl ExpansionSet {
    /// Keyword set after `i` expansions; beyond the fixed point this is the final set.
    pub fn level(&self, i: usize) -> &BTreeSet<KeywordId> {
        &self.levels[i.min(self.levels.len() - 1)]
    }

    /// Newly added keywords at step `i` (the seed set for `i == 0`).
    pub fn frontier(&self, i: usize) -> BTreeSet<KeywordId> {
        self.frontiers.get(i).cloned().unwrap_or_default()
    }

    /// Number of non-empty expansion steps actually taken.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    /// Whether expansion stopped before `max_level` because nothing new was reachable.
    pub fn reached_fixed_point(&self) -> bool {
        self.depth() < self.max_level
    }

    /// First level at which each keyword appears.
    pub fn keyword_levels(&self) -> HashMap<KeywordId, usize> {
        let mut out = HashMap::new();
        for (i, f) in self.frontiers.iter().enumerate() {
            for &k in f {
                out.entry(k).or_insert(i);
            }
        }
        out
    }
}
