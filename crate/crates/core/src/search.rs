//! Semantic background search: level assignment through ontology expansion,
//! per-level band sampling, and the composition manifest handed to the compositor.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, KeywordId, Role};
use crate::error::{Error, Result};
use crate::io;
use crate::ontology::Ontology;
use crate::rng;

/// Backgrounds for one target grouped by the expansion level at which they first match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub target_id: String,
    /// `levels[l]` holds background ids, sorted, first matched at level `l`.
    pub levels: Vec<Vec<String>>,
}

impl CandidateSet {
    pub fn total(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn level_of(&self, background_id: &str) -> Option<usize> {
        self.levels
            .iter()
            .position(|l| l.binary_search_by(|b| b.as_str().cmp(background_id)).is_ok())
    }
}

pub(crate) fn require_aligned(corpus: &Corpus, onto: &Ontology) -> Result<()> {
    if corpus.keyword_table() != onto.keywords() {
        return Err(Error::invalid(
            "ontology keyword table differs from the corpus; reindex it first",
        ));
    }
    Ok(())
}

/// Search keywords of a target: its keyword set without the foreground keyword.
pub fn search_keywords(corpus: &Corpus, target_id: &str) -> Result<Vec<KeywordId>> {
    let rec = corpus.record(target_id)?;
    if rec.role != Role::Target {
        return Err(Error::invalid(format!("{target_id:?} is not a target")));
    }
    Ok(rec
        .keywords
        .iter()
        .copied()
        .filter(|&k| Some(k) != rec.foreground)
        .collect())
}

/// Assigns every admissible background its minimal expansion level, up to `max_level`.
pub fn find_candidates(
    corpus: &Corpus,
    onto: &Ontology,
    target_id: &str,
    max_level: usize,
) -> Result<CandidateSet> {
    require_aligned(corpus, onto)?;
    let seed = search_keywords(corpus, target_id)?;
    let foreground = corpus.record(target_id)?.foreground;
    let expansion = onto.expand(&seed, max_level)?;
    let first_level = expansion.keyword_levels();

    let mut levels = vec![Vec::new(); max_level + 1];
    for bg in corpus.backgrounds() {
        if foreground.is_some_and(|fg| bg.contains(fg)) {
            continue;
        }
        let level = bg.keywords.iter().filter_map(|k| first_level.get(k)).min();
        if let Some(&l) = level {
            levels[l].push(bg.image_id.clone());
        }
    }
    for l in &mut levels {
        l.sort();
    }
    Ok(CandidateSet {
        target_id: target_id.to_string(),
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub background_id: String,
    pub level: usize,
}

/// Per-level draw counts before sampling. Exposed for inspection and tests.
pub fn band_quotas(available: &[usize], n: usize, weights: &[f64]) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("band weights must be finite and non-negative"));
    }
    let total_weight: f64 = weights.iter().sum();
    if total_weight <= 0.0 {
        return Err(Error::invalid("band weights must not all be zero"));
    }
    let levels = available.len().max(weights.len());
    let avail = |l: usize| available.get(l).copied().unwrap_or(0);

    let mut quota: Vec<usize> = (0..levels)
        .map(|l| {
            let w = weights.get(l).copied().unwrap_or(0.0);
            let share = n as f64 * w / total_weight;
            (share - 1e-9).ceil().max(0.0) as usize
        })
        .collect();
    // Ceilings can overshoot n; trim from the farthest level down.
    let mut excess = quota.iter().sum::<usize>().saturating_sub(n);
    for q in quota.iter_mut().rev() {
        let cut = excess.min(*q);
        *q -= cut;
        excess -= cut;
    }

    let direct: Vec<usize> = (0..levels).map(|l| quota[l].min(avail(l))).collect();
    let mut take = direct.clone();
    for l in 0..levels {
        let mut deficit = quota[l] - direct[l];
        let mut dist = 1;
        while deficit > 0 && (dist <= l || l + dist < levels) {
            let near = [l.checked_sub(dist), Some(l + dist).filter(|&x| x < levels)];
            for m in near.into_iter().flatten() {
                let extra = deficit.min(avail(m) - take[m]);
                take[m] += extra;
                deficit -= extra;
            }
            dist += 1;
        }
    }
    Ok(take)
}

/// Draws up to `n` backgrounds across levels in proportion to `weights`,
/// without replacement, deterministically for a given seed and target.
pub fn band_sample(cands: &CandidateSet, n: usize, weights: &[f64], seed: u64) -> Result<Vec<Sample>> {
    if cands.total() == 0 {
        return Err(Error::EmptyCandidates);
    }
    let available: Vec<usize> = cands.levels.iter().map(Vec::len).collect();
    let take = band_quotas(&available, n, weights)?;
    let mut rng = rng::stream(seed, &cands.target_id);
    let mut out = Vec::new();
    for (level, &k) in take.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let pool = &cands.levels[level];
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), k).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| Sample {
            background_id: pool[i].clone(),
            level,
        }));
    }
    Ok(out)
}

/// One testing image: the target's foreground composited over a background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub test_id: String,
    pub target_id: String,
    pub background_id: String,
    pub level: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompositionManifest {
    pub rows: Vec<ManifestRow>,
}

pub fn test_id(target_id: &str, background_id: &str) -> String {
    format!("{target_id}__{background_id}")
}

impl CompositionManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_jsonl(path, &self.rows)
    }

    pub fn load(path: &Path) -> Result<CompositionManifest> {
        let rows: Vec<ManifestRow> = io::read_jsonl(path)?;
        let m = CompositionManifest { rows };
        m.check_unique()?;
        Ok(m)
    }

    fn check_unique(&self) -> Result<()> {
        let mut tests = HashSet::new();
        let mut pairs = HashSet::new();
        for r in &self.rows {
            if !pairs.insert((&r.target_id, &r.background_id)) || !tests.insert(&r.test_id) {
                return Err(Error::DuplicatePair {
                    target: r.target_id.clone(),
                    background: r.background_id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Rows grouped by target id, targets in id order, rows in manifest order.
    pub fn by_target(&self) -> BTreeMap<&str, Vec<&ManifestRow>> {
        let mut out: BTreeMap<&str, Vec<&ManifestRow>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.target_id.as_str()).or_default().push(r);
        }
        out
    }

    /// Checks every row against the corpus: roles, and the foreground filter.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        self.check_unique()?;
        for r in &self.rows {
            let target = corpus.record(&r.target_id)?;
            let bg = corpus.record(&r.background_id)?;
            if target.role != Role::Target || bg.role != Role::Background {
                return Err(Error::invalid(format!(
                    "row {} must pair a target with a background",
                    r.test_id
                )));
            }
            if target.foreground.is_some_and(|fg| bg.contains(fg)) {
                return Err(Error::ForegroundConflict {
                    target: r.target_id.clone(),
                    background: r.background_id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Turns per-target samples into manifest rows, targets in id order.
pub fn emit_manifest(
    corpus: &Corpus,
    samples: &BTreeMap<String, Vec<Sample>>,
) -> Result<CompositionManifest> {
    let rows = samples
        .iter()
        .flat_map(|(target, s)| {
            s.iter().map(move |s| ManifestRow {
                test_id: test_id(target, &s.background_id),
                target_id: target.clone(),
                background_id: s.background_id.clone(),
                level: s.level,
                distance: None,
            })
        })
        .collect();
    let manifest = CompositionManifest { rows };
    manifest.validate(corpus)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    pub n: usize,
    pub max_level: usize,
    /// Per-level proportions; empty means uniform over `0..=max_level`.
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            n: 10,
            max_level: 4,
            weights: Vec::new(),
            seed: 0,
        }
    }
}

impl SearchParams {
    pub fn effective_weights(&self) -> Vec<f64> {
        if self.weights.is_empty() {
            vec![1.0; self.max_level + 1]
        } else {
            self.weights.clone()
        }
    }
}

/// Runs candidate discovery and sampling for every target. Targets without
/// any candidate are skipped with a warning.
pub fn search_all(corpus: &Corpus, onto: &Ontology, params: &SearchParams) -> Result<CompositionManifest> {
    let weights = params.effective_weights();
    band_quotas(&[], params.n, &weights)?;
    let targets: Vec<&str> = corpus.targets().map(|r| r.image_id.as_str()).collect();
    let per_target: Vec<(String, Option<Vec<Sample>>)> = targets
        .par_iter()
        .map(|&t| {
            let cands = find_candidates(corpus, onto, t, params.max_level)?;
            let samples = match band_sample(&cands, params.n, &weights, params.seed) {
                Ok(s) => Some(s),
                Err(Error::EmptyCandidates) => None,
                Err(e) => return Err(e),
            };
            Ok((t.to_string(), samples))
        })
        .collect::<Result<_>>()?;
    let mut samples = BTreeMap::new();
    for (t, s) in per_target {
        match s {
            Some(s) => {
                samples.insert(t, s);
            }
            None => log::warn!("target {t:?} has no background candidates; skipped"),
        }
    }
    emit_manifest(corpus, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mining::{confidences, mine_apriori, MinSupport};
    use crate::ontology::build_ontology;

    /// Chain a - b - c - d - e over backgrounds, plus a fish target on {fish, a}.
    fn chain_world() -> (Corpus, Ontology) {
        let mut b = Corpus::builder();
        b.target("fish1", &["fish", "a"], "fish").unwrap();
        b.background("bg_a", &["a"]).unwrap();
        b.background("bg_ab", &["a", "b"]).unwrap();
        b.background("bg_bc", &["b", "c"]).unwrap();
        b.background("bg_cd", &["c", "d"]).unwrap();
        b.background("bg_de", &["d", "e"]).unwrap();
        b.background("bg_e", &["e"]).unwrap();
        b.background("bg_fish", &["fish", "b"]).unwrap();
        b.background("bg_x", &["x"]).unwrap();
        let corpus = b.build().unwrap();
        let t = mine_apriori(&corpus, MinSupport::Count(1)).unwrap();
        let onto = build_ontology(&confidences(&t), 0.0).unwrap();
        (corpus, onto)
    }

    #[test]
    fn levels_follow_expansion() {
        let (c, o) = chain_world();
        let cs = find_candidates(&c, &o, "fish1", 4).unwrap();
        assert_eq!(cs.levels[0], ["bg_a", "bg_ab"]);
        assert_eq!(cs.levels[1], ["bg_bc"]);
        assert_eq!(cs.levels[2], ["bg_cd"]);
        assert_eq!(cs.levels[3], ["bg_de"]);
        assert_eq!(cs.levels[4], ["bg_e"]);
        assert_eq!(cs.level_of("bg_fish"), None, "foreground filter");
        assert_eq!(cs.level_of("bg_x"), None, "unreachable");
    }

    #[test]
    fn direct_match_is_level_zero() {
        let mut b = Corpus::builder();
        b.target("fish", &["painting", "water", "tree", "fish"], "fish").unwrap();
        b.background("lake", &["water", "boat"]).unwrap();
        b.background("pond", &["fish", "water"]).unwrap();
        let c = b.build().unwrap();
        let t = mine_apriori(&c, MinSupport::Count(1)).unwrap();
        let o = build_ontology(&confidences(&t), 0.0).unwrap();
        let cs = find_candidates(&c, &o, "fish", 2).unwrap();
        assert_eq!(cs.level_of("lake"), Some(0));
        assert_eq!(cs.level_of("pond"), None);
    }

    #[test]
    fn growing_max_level_keeps_levels() {
        let (c, o) = chain_world();
        let small = find_candidates(&c, &o, "fish1", 1).unwrap();
        let big = find_candidates(&c, &o, "fish1", 3).unwrap();
        for (l, ids) in small.levels.iter().enumerate() {
            for id in ids {
                assert_eq!(big.level_of(id), Some(l));
            }
        }
    }

    #[test]
    fn unknown_target() {
        let (c, o) = chain_world();
        assert!(matches!(
            find_candidates(&c, &o, "nope", 2),
            Err(Error::UnknownImage(_))
        ));
    }

    #[test]
    fn uniform_quotas_divide_exactly() {
        let q = band_quotas(&[100; 5], 50, &[1.0; 5]).unwrap();
        assert_eq!(q, vec![10; 5]);
    }

    #[test]
    fn single_band_weight() {
        let q = band_quotas(&[30, 30, 30], 20, &[1.0]).unwrap();
        assert_eq!(q, vec![20, 0, 0]);
    }

    #[test]
    fn empty_level_spills_downward_first() {
        // n=15 over 5 uniform levels gives quota 3 each; level 2 is empty.
        let q = band_quotas(&[10, 10, 0, 10, 10], 15, &[1.0; 5]).unwrap();
        assert_eq!(q, vec![3, 6, 0, 3, 3]);
    }

    #[test]
    fn spill_continues_outward() {
        let q = band_quotas(&[1, 1, 0, 1, 10], 15, &[1.0; 5]).unwrap();
        assert_eq!(q.iter().sum::<usize>(), 13);
        assert_eq!(q, vec![1, 1, 0, 1, 10]);
    }

    #[test]
    fn ceilings_are_trimmed_to_n() {
        let q = band_quotas(&[10; 3], 10, &[1.0; 3]).unwrap();
        assert_eq!(q.iter().sum::<usize>(), 10);
        assert_eq!(q, vec![4, 4, 2]);
    }

    #[test]
    fn quota_validation() {
        assert!(band_quotas(&[1], 0, &[1.0]).is_err());
        assert!(band_quotas(&[1], 1, &[0.0, 0.0]).is_err());
        assert!(band_quotas(&[1], 1, &[-1.0, 2.0]).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_without_replacement() {
        let cands = CandidateSet {
            target_id: "t".into(),
            levels: (0..3)
                .map(|l| (0..20).map(|i| format!("b{l}_{i:02}")).collect())
                .collect(),
        };
        let a = band_sample(&cands, 12, &[1.0; 3], 42).unwrap();
        let b = band_sample(&cands, 12, &[1.0; 3], 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        let uniq: HashSet<_> = a.iter().map(|s| &s.background_id).collect();
        assert_eq!(uniq.len(), 12);
        let c = band_sample(&cands, 12, &[1.0; 3], 43).unwrap();
        assert_ne!(a, c);
        let empty = CandidateSet {
            target_id: "t".into(),
            levels: vec![vec![]],
        };
        assert!(matches!(
            band_sample(&empty, 3, &[1.0], 1),
            Err(Error::EmptyCandidates)
        ));
    }

    #[test]
    fn manifest_cardinality_and_conflicts() {
        let mut b = Corpus::builder();
        b.target("t1", &["fish", "water"], "fish").unwrap();
        b.target("t2", &["dog", "grass"], "dog").unwrap();
        for i in 0..3 {
            b.background(&format!("w{i}"), &["water"]).unwrap();
            b.background(&format!("g{i}"), &["grass"]).unwrap();
        }
        b.background("pond", &["fish", "water"]).unwrap();
        let c = b.build().unwrap();
        let mut samples = BTreeMap::new();
        for (t, p) in [("t1", "w"), ("t2", "g")] {
            samples.insert(
                t.to_string(),
                (0..3)
                    .map(|i| Sample {
                        background_id: format!("{p}{i}"),
                        level: 0,
                    })
                    .collect(),
            );
        }
        let m = emit_manifest(&c, &samples).unwrap();
        assert_eq!(m.rows.len(), 6);
        assert_eq!(m.rows[0].test_id, "t1__w0");

        samples.get_mut("t1").unwrap().push(Sample {
            background_id: "pond".into(),
            level: 0,
        });
        assert!(matches!(
            emit_manifest(&c, &samples),
            Err(Error::ForegroundConflict { .. })
        ));
        samples.get_mut("t1").unwrap().pop();
        samples.get_mut("t1").unwrap().push(Sample {
            background_id: "w0".into(),
            level: 0,
        });
        assert!(matches!(
            emit_manifest(&c, &samples),
            Err(Error::DuplicatePair { .. })
        ));
    }

    #[test]
    fn search_all_is_reproducible() {
        let (c, o) = chain_world();
        let p = SearchParams {
            n: 4,
            max_level: 3,
            weights: vec![],
            seed: 9,
        };
        let a = search_all(&c, &o, &p).unwrap();
        let b = search_all(&c, &o, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        a.validate(&c).unwrap();
    }
}
