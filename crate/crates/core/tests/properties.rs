use std::collections::{BTreeMap, BTreeSet, VecDeque};

use bginv_core::assessor::{cohen_kappa, train_random_forest};
use bginv_core::corpus::{Corpus, KeywordId, RawRecord, Role};
use bginv_core::mining::{confidences, mine_apriori, mine_bruteforce, mine_fpgrowth, MinSupport};
use bginv_core::ontology::{build_ontology, Ontology};
use bginv_core::resample::{interpolate, interpolate_bruteforce};
use bginv_core::search::band_quotas;
use bginv_core::signals::{build_point_clouds, reduce_measurements, Dif, Modality};
use bginv_core::synth::{generate, SynthSpec};
use bginv_core::{PointCloudF64, RbfConfigF64};
use proptest::prelude::*;

fn corpus_of(sets: &[BTreeSet<usize>]) -> Corpus {
    Corpus::from_raw(sets.iter().enumerate().map(|(i, s)| RawRecord {
        id: format!("img-{i:03}"),
        role: Role::Background,
        keywords: s.iter().map(|k| format!("k{k:02}")).collect(),
        foreground: None,
    }))
    .unwrap()
}

fn keyword_sets() -> impl Strategy<Value = Vec<BTreeSet<usize>>> {
    (2usize..=12).prop_flat_map(|k| {
        prop::collection::vec(prop::collection::btree_set(0..k, 1..=k.min(5)), 1..120)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn miners_agree_with_direct_counts(sets in keyword_sets(), min in 1u64..5) {
        let corpus = corpus_of(&sets);
        let ms = MinSupport::Count(min);
        let brute = mine_bruteforce(&corpus, ms).unwrap();
        prop_assert_eq!(&mine_apriori(&corpus, ms).unwrap(), &brute);
        prop_assert_eq!(&mine_fpgrowth(&corpus, ms).unwrap(), &brute);

        let id = |k: usize| corpus.keyword_id(&format!("k{k:02}"));
        let count = |pred: &dyn Fn(&BTreeSet<usize>) -> bool| sets.iter().filter(|s| pred(s)).count() as u64;
        for a in 0..12 {
            let Some(ia) = id(a) else { continue };
            let ca = count(&|s| s.contains(&a));
            prop_assert_eq!(brute.singleton_count(ia), (ca >= min).then_some(ca));
            for b in a + 1..12 {
                let Some(ib) = id(b) else { continue };
                let cab = count(&|s| s.contains(&a) && s.contains(&b));
                let (lo, hi) = if ia < ib { (ia, ib) } else { (ib, ia) };
                prop_assert_eq!(brute.pair_count(lo, hi), (cab >= min).then_some(cab));
            }
        }

        let conf = confidences(&brute);
        for ((from, to), c) in conf.iter() {
            let (lo, hi) = if from < to { (from, to) } else { (to, from) };
            let pair = brute.pair_count(lo, hi).unwrap() as f64;
            let single = brute.singleton_count(from).unwrap() as f64;
            prop_assert!((c.value::<f64>() - pair / single).abs() <= 1e-12);
        }

        let onto = build_ontology(&conf, 0.0).unwrap();
        for k in 0..onto.keywords().len() {
            let from = KeywordId(k as u32);
            for e in onto.edges_from(from) {
                prop_assert!(onto.edge(e.to, from).is_some());
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Graph {
    n: usize,
    edges: BTreeMap<(usize, usize), f64>,
}

fn graphs() -> impl Strategy<Value = Graph> {
    (2usize..=8).prop_flat_map(|n| {
        prop::collection::btree_map((0..n, 0..n), prop::sample::select(vec![0.25, 0.5, 0.75, 1.0]), 0..=n * 3)
            .prop_map(move |mut edges| {
                edges.retain(|(a, b), _| a != b);
                Graph { n, edges }
            })
    })
}

fn ontology_of(g: &Graph) -> Ontology {
    let names: Vec<String> = (0..g.n).map(|i| format!("n{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let edges: Vec<(&str, &str, f64)> = g.edges.iter().map(|(&(a, b), &w)| (refs[a], refs[b], w)).collect();
    Ontology::from_named_edges(&refs, edges).unwrap()
}

/// Every simple path, ranked by hops, then product (descending), then id sequence.
fn best_path_exhaustive(g: &Graph, from: usize, to: usize) -> Option<(usize, f64, Vec<usize>)> {
    fn walk(g: &Graph, to: usize, path: &mut Vec<usize>, agg: f64, best: &mut Option<(usize, f64, Vec<usize>)>) {
        let u = *path.last().unwrap();
        if u == to {
            let cand = (path.len() - 1, agg, path.clone());
            let better = match best {
                None => true,
                Some((h, a, p)) => (cand.0, -cand.1, &cand.2) < (*h, -*a, &*p),
            };
            if better {
                *best = Some(cand);
            }
            return;
        }
        for (&(a, b), &w) in g.edges.range((u, 0)..(u + 1, 0)) {
            debug_assert_eq!(a, u);
            if !path.contains(&b) {
                path.push(b);
                walk(g, to, path, agg * w, best);
                path.pop();
            }
        }
    }
    let mut best = None;
    walk(g, to, &mut vec![from], 1.0, &mut best);
    best
}

fn bfs_levels(g: &Graph, seed: &BTreeSet<usize>) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n];
    let mut q: VecDeque<usize> = seed.iter().copied().collect();
    for &s in seed {
        dist[s] = Some(0);
    }
    while let Some(u) = q.pop_front() {
        for (&(_, b), _) in g.edges.range((u, 0)..(u + 1, 0)) {
            if dist[b].is_none() {
                dist[b] = Some(dist[u].unwrap() + 1);
                q.push_back(b);
            }
        }
    }
    dist
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn shortest_path_matches_exhaustive(g in graphs()) {
        let onto = ontology_of(&g);
        for from in 0..g.n {
            let tree = onto.paths_from(KeywordId(from as u32)).unwrap();
            for to in 0..g.n {
                let got = tree.path_to(KeywordId(to as u32));
                let want = best_path_exhaustive(&g, from, to);
                match (got, want) {
                    (None, None) => {}
                    (Some(p), Some((hops, agg, path))) => {
                        prop_assert_eq!(p.hops, hops);
                        prop_assert_eq!(p.aggregate, agg);
                        let ids: Vec<usize> = p.path.iter().map(|k| k.index()).collect();
                        prop_assert_eq!(ids, path);
                    }
                    (got, want) => prop_assert!(false, "{from}->{to}: {got:?} vs {want:?}"),
                }
            }
        }
    }

    #[test]
    fn expansion_is_monotone_and_stable(
        g in graphs(),
        seed_bits in 1u32..256,
        max_level in 0usize..6,
    ) {
        let seed: BTreeSet<usize> = (0..g.n).filter(|i| seed_bits >> i & 1 == 1).collect();
        prop_assume!(!seed.is_empty());
        let onto = ontology_of(&g);
        let ids: Vec<KeywordId> = seed.iter().map(|&i| KeywordId(i as u32)).collect();
        let small = onto.expand(&ids, max_level).unwrap();
        let large = onto.expand(&ids, max_level + 3).unwrap();
        let dist = bfs_levels(&g, &seed);
        for i in 0..=max_level {
            let want: BTreeSet<KeywordId> = (0..g.n)
                .filter(|&k| dist[k].is_some_and(|d| d <= i))
                .map(|k| KeywordId(k as u32))
                .collect();
            prop_assert_eq!(small.level(i), &want);
            prop_assert_eq!(large.level(i), &want);
            if i > 0 {
                prop_assert!(small.level(i - 1).is_subset(small.level(i)));
            }
        }
        let large_levels = large.keyword_levels();
        for (k, level) in small.keyword_levels() {
            prop_assert_eq!(large_levels.get(&k), Some(&level));
        }
    }

    #[test]
    fn quotas_respect_availability(
        available in prop::collection::vec(0usize..12, 1..7),
        n in 1usize..40,
        weights in prop::collection::vec(0.0f64..3.0, 1..7),
    ) {
        prop_assume!(weights.iter().sum::<f64>() > 0.0);
        let take = band_quotas(&available, n, &weights).unwrap();
        let total: usize = available.iter().sum();
        prop_assert_eq!(take.iter().sum::<usize>(), n.min(total));
        for (l, &t) in take.iter().enumerate() {
            prop_assert!(t <= available.get(l).copied().unwrap_or(0));
        }
    }
}

fn clouds() -> impl Strategy<Value = (PointCloudF64, RbfConfigF64)> {
    let points = prop::collection::vec((0.0f64..5.0, 0.0f64..5.0, -1.0f64..1.0), 1..60);
    (points, 2usize..10, 0.3f64..8.0, 0.5f64..6.0, 1usize..10).prop_map(|(pts, r, radius, sigma, k)| {
        let cloud = PointCloudF64 {
            model_id: "m".into(),
            position: "p".into(),
            dif: Dif::Subtract,
            d_max: 5.0,
            points: pts.into_iter().map(|(a, b, v)| [a, b, v]).collect(),
        };
        (cloud, RbfConfigF64 { r, radius, sigma, k })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rbf_matches_bruteforce_within_hull((cloud, cfg) in clouds()) {
        let fast = interpolate(&cloud, &cfg).unwrap();
        let slow = interpolate_bruteforce(&cloud, &cfg).unwrap();
        prop_assert_eq!(fast.values.len(), cfg.r * cfg.r);
        let lo = cloud.points.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
        let hi = cloud.points.iter().map(|p| p[2]).fold(f64::NEG_INFINITY, f64::max);
        for (a, b) in fast.values.iter().zip(&slow.values) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            prop_assert!(*a >= lo - 1e-12 && *a <= hi + 1e-12);
        }
    }

    #[test]
    fn mirrored_clouds_give_antisymmetric_matrices((cloud, cfg) in clouds()) {
        let mut mirrored = cloud.clone();
        mirrored.points = cloud
            .points
            .iter()
            .map(|&[a, b, v]| [(a * 2.0).round() / 2.0, (b * 2.0).round() / 2.0, v])
            .flat_map(|[a, b, v]| [[a, b, v], [b, a, -v]])
            .collect();
        // Points snap to a coarse lattice so distance ties are common. An odd K
        // can split a partner pair tied on the diagonal.
        let cfg = RbfConfigF64 { k: 2 * cfg.k, ..cfg };
        let m = interpolate(&mirrored, &cfg).unwrap();
        for i in 0..cfg.r {
            for j in 0..cfg.r {
                prop_assert!((m.get(i, j) + m.get(j, i)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn kappa_symmetric_and_reflexive(
        a in prop::collection::vec(1u8..=3, 2..40),
        noise in prop::collection::vec(prop::option::of(1u8..=3), 40),
    ) {
        let b: Vec<u8> = a.iter().zip(&noise).map(|(&x, n)| n.unwrap_or(x)).collect();
        let ab = cohen_kappa(&a, &b).unwrap();
        let ba = cohen_kappa(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
        prop_assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn forest_is_deterministic(
        rows in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 3), 1u8..=3), 4..30),
        seed in any::<u64>(),
    ) {
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
        let y: Vec<u8> = rows.iter().map(|r| r.1).collect();
        let names: Vec<String> = (0..3).map(|i| format!("f{i}")).collect();
        let a = train_random_forest(&x, &y, &names, 5, seed);
        let b = train_random_forest(&x, &y, &names, 5, seed);
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synth_clouds_pair_up(seed in any::<u64>(), n in 1usize..6, targets in 1usize..4) {
        let spec = SynthSpec { targets, n, models_per_profile: 1, seed, ..SynthSpec::default() };
        let bundle = generate(&spec).unwrap();
        let ms = reduce_measurements::<f64>(bundle.measurements.clone(), Modality::Max).unwrap();
        let clouds = build_point_clouds(&ms, &bundle.distances, &bundle.manifest, Dif::Subtract, None).unwrap();
        prop_assert!(!clouds.is_empty());
        let expected: usize = bundle.manifest.by_target().values().map(|rows| rows.len() * (rows.len() + 1)).sum();
        for c in &clouds {
            prop_assert_eq!(c.len(), expected);
            for pair in c.points.chunks(2) {
                let [a, b] = pair else { unreachable!() };
                prop_assert_eq!((a[0], a[1]), (b[1], b[0]));
                prop_assert_eq!(a[2], -b[2]);
            }
        }
    }
}
