mod common;

use std::collections::{BTreeMap, BTreeSet};

use hetmpc::graph::WEdge;
use hetmpc::primitives::tree::tree_depth;
use hetmpc::primitives::{
    aggregate, arrange_nodes, disseminate, het_sort, AggregationTree, KeyTree, SortedLayout,
};
use hetmpc::simcore::{distribute_edges, Cluster, ClusterConfig, MachineId, Placement, SimError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cluster(n: usize, m: usize, seed: u64) -> Cluster {
    Cluster::new(ClusterConfig::new(n, m).with_seed(seed)).unwrap()
}

#[test]
fn sorting_already_sorted_input_keeps_layout() {
    // n=16, m=40 gives 10 small machines
    let mut c = Cluster::new(ClusterConfig::new(16, 40).with_polylog(32, 1)).unwrap();
    let shards: Vec<Vec<u64>> = (0..10).map(|s| (s * 10..s * 10 + 10).collect()).collect();
    let out = het_sort(&mut c, "sort", shards.clone()).unwrap();
    assert_eq!(out.shards, shards);
    assert_eq!(c.rounds_used(), 3);
}

#[test]
fn sorting_reverse_input_balances_ten_per_machine() {
    let mut c = Cluster::new(ClusterConfig::new(16, 40).with_polylog(32, 1)).unwrap();
    let items: Vec<u64> = (0..100).rev().collect();
    let shards: Vec<Vec<u64>> = items.chunks(10).map(<[u64]>::to_vec).collect();
    let out = het_sort(&mut c, "sort", shards).unwrap();
    assert!(out.is_sorted());
    assert!(out.shards.iter().all(|s| s.len() == 10));
    assert_eq!(out.into_items(), (0..100).collect::<Vec<u64>>());
}

#[test]
fn sorting_multiset_with_duplicates_matches_gathered_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    // 25 small machines, so the splitters fit on each of them
    let mut c = Cluster::new(ClusterConfig::new(64, 200).with_seed(3)).unwrap();
    let k = c.small_count();
    let shards: Vec<Vec<u64>> =
        (0..k).map(|_| (0..rng.random_range(0..9)).map(|_| rng.random_range(0..20)).collect()).collect();
    let mut oracle: Vec<u64> = shards.concat();
    oracle.sort();
    let out = het_sort(&mut c, "sort", shards).unwrap();
    assert!(out.is_sorted());
    for (b, s) in out.boundaries.iter().zip(&out.shards) {
        assert_eq!(b.as_ref(), s.first());
    }
    assert_eq!(out.into_items(), oracle);
}

#[test]
fn sorting_overfull_shards_is_reported() {
    // everything on one machine that cannot hold it after the route
    let mut c = Cluster::new(ClusterConfig::new(16, 40).with_polylog(1, 1)).unwrap();
    let mut shards = vec![Vec::new(); 10];
    shards[0] = vec![5u64; 30];
    let err = het_sort(&mut c, "sort", shards).unwrap_err();
    assert!(matches!(err, SimError::Budget { .. } | SimError::Capacity { .. }), "{err:?}");
}

fn degree_leaves(shards: &[Vec<WEdge>]) -> Vec<BTreeMap<u64, u64>> {
    shards
        .iter()
        .map(|es| {
            let mut m = BTreeMap::new();
            for e in es {
                *m.entry(e.u).or_insert(0) += 1;
                *m.entry(e.v).or_insert(0) += 1;
            }
            m
        })
        .collect()
}

#[test]
fn aggregated_degrees_match_direct_count() {
    let g = common::gnm(128, 2000, 1, 4);
    let mut c = cluster(g.n, g.m(), 4);
    let tree = KeyTree::new(&c);
    let shards = distribute_edges(&mut c, &g.edges, Placement::Seeded).unwrap();
    let (deg, _) = aggregate(&mut c, &tree, "deg", degree_leaves(&shards), |a, b| *a += b).unwrap();
    let oracle = common::degree_oracle(&g);
    for v in 0..g.n {
        assert_eq!(deg.get(&(v as u64)).copied().unwrap_or(0), oracle[v]);
    }
    assert_eq!(c.rounds_used(), tree.depth() + 1);
}

#[test]
fn aggregate_of_singletons_is_the_element() {
    let mut c = cluster(64, 500, 1);
    let tree = KeyTree::new(&c);
    let k = c.small_count();
    let leaves: Vec<BTreeMap<u64, u64>> = (0..k).map(|s| BTreeMap::from([(s as u64, 1000 + s as u64)])).collect();
    let (res, _) = aggregate(&mut c, &tree, "one", leaves, |a, b| *a = (*a).max(b)).unwrap();
    for s in 0..k as u64 {
        assert_eq!(res[&s], 1000 + s);
    }
}

#[test]
fn aggregate_min_over_triples_keyed_by_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut c = cluster(64, 800, 8);
    let tree = KeyTree::new(&c);
    let k = c.small_count();
    let triples: Vec<Vec<(u64, u64, u64)>> = (0..k)
        .map(|_| (0..6).map(|_| (rng.random_range(0..10), rng.random_range(0..4), rng.random_range(0..64))).collect())
        .collect();
    let leaves: Vec<BTreeMap<(u64, u64), u64>> = triples
        .iter()
        .map(|ts| {
            let mut m: BTreeMap<(u64, u64), u64> = BTreeMap::new();
            for &(v, cl, u) in ts {
                let e = m.entry((v, cl)).or_insert(u);
                *e = (*e).min(u);
            }
            m
        })
        .collect();
    let (res, _) = aggregate(&mut c, &tree, "min", leaves, |a, b| *a = (*a).min(b)).unwrap();
    let mut oracle: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for &(v, cl, u) in triples.iter().flatten() {
        let e = oracle.entry((v, cl)).or_insert(u);
        *e = (*e).min(u);
    }
    assert_eq!(res, oracle);
}

#[test]
fn aggregation_correct_for_sum_min_max_argmin() {
    let g = common::gnm(64, 900, 50, 11);
    let mut c = cluster(g.n, g.m(), 11);
    let tree = KeyTree::new(&c);
    let shards = distribute_edges(&mut c, &g.edges, Placement::RoundRobin).unwrap();
    let per_vertex = |f: &dyn Fn(&WEdge) -> u64| -> Vec<BTreeMap<u64, Vec<u64>>> {
        shards
            .iter()
            .map(|es| {
                let mut m: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
                for e in es {
                    m.entry(e.u).or_default().push(f(e));
                    m.entry(e.v).or_default().push(f(e));
                }
                m
            })
            .collect()
    };
    let weights = per_vertex(&|e| e.w);
    let mut gathered: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for m in &weights {
        for (&v, ws) in m {
            gathered.entry(v).or_default().extend(ws);
        }
    }
    type Fold = fn(&mut u64, u64);
    let folds: [(&str, Fold); 3] =
        [("sum", |a, b| *a += b), ("min", |a, b| *a = (*a).min(b)), ("max", |a, b| *a = (*a).max(b))];
    for (name, f) in folds {
        let leaves: Vec<BTreeMap<u64, u64>> = weights
            .iter()
            .map(|m| {
                m.iter()
                    .map(|(&v, ws)| {
                        let mut acc = ws[0];
                        for &w in &ws[1..] {
                            f(&mut acc, w);
                        }
                        (v, acc)
                    })
                    .collect()
            })
            .collect();
        let (res, _) = aggregate(&mut c, &tree, name, leaves, f).unwrap();
        for (v, ws) in &gathered {
            let mut acc = ws[0];
            for &w in &ws[1..] {
                f(&mut acc, w);
            }
            assert_eq!(res[v], acc, "{name} at {v}");
        }
    }
    // argmin by key: lightest incident edge as (w, other endpoint)
    let leaves: Vec<BTreeMap<u64, (u64, u64)>> = shards
        .iter()
        .map(|es| {
            let mut m: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
            for e in es {
                for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                    let x = m.entry(a).or_insert((e.w, b));
                    *x = (*x).min((e.w, b));
                }
            }
            m
        })
        .collect();
    let (res, _) = aggregate(&mut c, &tree, "argmin", leaves, |a, b| *a = (*a).min(b)).unwrap();
    for v in 0..g.n as u64 {
        let best = g.edges.iter().filter(|e| e.u == v || e.v == v).map(|e| (e.w, e.other(v))).min();
        assert_eq!(res.get(&v).copied(), best);
    }
}

#[test]
fn disseminate_single_part_is_a_broadcast() {
    let mut c = cluster(64, 700, 2);
    let tree = KeyTree::new(&c);
    let k = c.small_count();
    let holders: Vec<BTreeSet<u64>> = vec![BTreeSet::from([0]); k];
    let got = disseminate(&mut c, &tree, "bc", &BTreeMap::from([(0u64, 42u64)]), &holders).unwrap();
    assert!(got.iter().all(|m| m.get(&0) == Some(&42)));
    assert_eq!(c.rounds_used(), 2 * tree.depth() + 2);
}

#[test]
fn disseminated_labels_reach_exactly_the_placement_holders() {
    let g = common::gnm(128, 3000, 1, 6);
    let mut c = cluster(g.n, g.m(), 6);
    let tree = KeyTree::new(&c);
    let shards = distribute_edges(&mut c, &g.edges, Placement::Seeded).unwrap();
    let labels: BTreeMap<u64, u64> = (0..g.n as u64).map(|v| (v, v / 3)).collect();
    let holders: Vec<BTreeSet<u64>> =
        shards.iter().map(|es| es.iter().flat_map(|e| [e.u, e.v]).collect()).collect();
    let got = disseminate(&mut c, &tree, "label", &labels, &holders).unwrap();
    for (s, es) in shards.iter().enumerate() {
        let expect: BTreeMap<u64, u64> = es.iter().flat_map(|e| [e.u, e.v]).map(|v| (v, v / 3)).collect();
        assert_eq!(got[s], expect, "machine {s}");
    }
}

#[test]
fn disseminate_sends_nothing_for_unheld_parts() {
    let mut c = cluster(64, 700, 2);
    let tree = KeyTree::new(&c);
    let k = c.small_count();
    let holders: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); k];
    let got = disseminate(&mut c, &tree, "none", &BTreeMap::from([(5u64, 1u64)]), &holders).unwrap();
    assert!(got.iter().all(BTreeMap::is_empty));
    assert_eq!(c.summary().total_words, 0);
}

#[test]
fn arrange_star_keeps_center_contiguous() {
    let edges: Vec<WEdge> = (1..=5).map(|v| WEdge::new(0, v, v)).collect();
    let mut c = Cluster::new(ClusterConfig::new(16, 40)).unwrap();
    let tree = KeyTree::new(&c);
    let mut shards = vec![Vec::new(); c.small_count()];
    for (i, e) in edges.iter().enumerate() {
        shards[i * 2] = vec![*e];
    }
    let out = arrange_nodes(&mut c, &tree, &shards).unwrap();
    assert_eq!(out.count[&0], 5);
    assert!(out.layout.is_sorted());
    let holders: Vec<usize> = out
        .layout
        .shards
        .iter()
        .enumerate()
        .filter(|(_, s)| s.iter().any(|d| d.src == 0))
        .map(|(i, _)| i)
        .collect();
    assert!(holders.windows(2).all(|w| w[1] == w[0] + 1), "{holders:?}");
    assert_eq!(out.first[&0], MachineId::of_shard(holders[0]));
    let center: Vec<u64> = out.layout.shards.iter().flatten().filter(|d| d.src == 0).map(|d| d.w).collect();
    assert_eq!(center, vec![1, 2, 3, 4, 5]);
}

#[test]
fn arrange_degrees_match_oracle_and_sum_to_2m() {
    for (n, m, seed) in [(64, 1500, 1), (128, 4000, 2), (256, 6000, 3)] {
        let g = common::gnm(n, m, 100, seed);
        let mut c = cluster(n, m, seed);
        let tree = KeyTree::new(&c);
        let shards = distribute_edges(&mut c, &g.edges, Placement::Seeded).unwrap();
        let out = arrange_nodes(&mut c, &tree, &shards).unwrap();
        assert_eq!(out.count.values().sum::<u64>(), 2 * m as u64);
        let oracle = common::degree_oracle(&g);
        for v in 0..n {
            assert_eq!(out.count.get(&(v as u64)).copied().unwrap_or(0), oracle[v]);
        }
        assert!(out.layout.is_sorted());
        for (&v, spread) in &out.spread {
            let ids: Vec<usize> = spread.iter().map(|(id, _)| id.shard().unwrap()).collect();
            assert!(ids.windows(2).all(|w| w[1] == w[0] + 1));
            assert_eq!(spread.iter().map(|x| x.1).sum::<u64>(), out.count[&v]);
            assert_eq!(out.first[&v], spread[0].0);
            for (id, cnt) in spread {
                let here = out.layout.shards[id.shard().unwrap()].iter().filter(|d| d.src == v).count();
                assert_eq!(here as u64, *cnt);
            }
        }
        assert_eq!(c.rounds_used(), 2 * tree.depth() + 8);
    }
}

#[test]
fn primitive_rounds_do_not_depend_on_size() {
    let mut seen = BTreeSet::new();
    // at most n^{1.5} edges, so that n^{1-γ}·polylog machines cover them
    for (n, m) in [(64, 300), (64, 500), (128, 1000), (256, 3000), (512, 8000), (1024, 30000)] {
        let g = common::gnm(n, m, 1, n as u64 + m as u64);
        let mut c = cluster(n, m, 1);
        let tree = KeyTree::new(&c);
        let shards = distribute_edges(&mut c, &g.edges, Placement::Seeded).unwrap();
        aggregate(&mut c, &tree, "deg", degree_leaves(&shards), |a, b| *a += b).unwrap();
        let agg = c.rounds_used();
        let holders: Vec<BTreeSet<u64>> =
            shards.iter().map(|es| es.iter().flat_map(|e| [e.u, e.v]).collect()).collect();
        let labels: BTreeMap<u64, u64> = (0..n as u64).map(|v| (v, v)).collect();
        disseminate(&mut c, &tree, "label", &labels, &holders).unwrap();
        let dis = c.rounds_used() - agg;
        let before = c.rounds_used();
        arrange_nodes(&mut c, &tree, &shards).unwrap();
        let arr = c.rounds_used() - before;
        seen.insert((agg, dis, arr));
    }
    assert_eq!(seen.len(), 1, "{seen:?}");
}

#[test]
fn dense_graphs_get_one_more_level_and_keep_fan_in() {
    for (n, m) in [(256, 20000), (1024, 60000)] {
        let g = common::gnm(n, m, 1, 9);
        let mut c = cluster(n, m, 4);
        let tree = KeyTree::new(&c);
        let b = c.config().branching();
        assert_eq!(tree.depth(), tree_depth(0.5) + 1);
        assert!(b.pow(tree.depth() as u32) >= c.small_count());
        for key in 0u64..20 {
            let t = tree.materialize(&key, &(0..c.small_count()).collect::<Vec<_>>());
            assert!(t.max_fan_in() <= b, "fan-in {} above {b}", t.max_fan_in());
        }
        let shards = distribute_edges(&mut c, &g.edges, Placement::Seeded).unwrap();
        let (deg, _) = aggregate(&mut c, &tree, "deg", degree_leaves(&shards), |a, b| *a += b).unwrap();
        let oracle = common::degree_oracle(&g);
        assert!(deg.iter().all(|(&v, &d)| oracle[v as usize] == d));
        assert_eq!(c.rounds_used(), tree.depth() + 1);
    }
}

#[test]
fn sample_sort_rounds_do_not_depend_on_size() {
    let mut seen = BTreeSet::new();
    for (n, m) in [(16, 40), (64, 200), (128, 400), (256, 300)] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64 * m as u64);
        let mut c = cluster(n, m, 2);
        let k = c.small_count();
        let shards: Vec<Vec<u64>> = (0..k).map(|_| (0..4).map(|_| rng.random_range(0..1000)).collect()).collect();
        let out: SortedLayout<u64> = het_sort(&mut c, "sort", shards).unwrap();
        assert!(out.is_sorted());
        seen.insert(c.rounds_used());
    }
    assert_eq!(seen, BTreeSet::from([3]));
}

#[test]
fn sample_sort_reports_splitters_that_cannot_fit() {
    // 75 small machines: 74 splitters do not fit on one of them
    let mut c = cluster(64, 600, 3);
    let shards: Vec<Vec<u64>> = (0..c.small_count() as u64).map(|s| vec![s, s + 100]).collect();
    let err = het_sort(&mut c, "sort", shards).unwrap_err();
    assert!(matches!(err, SimError::Capacity { .. }), "{err:?}");
}

#[test]
fn tree_depth_is_bounded_for_every_materialized_tree() {
    for gamma in [0.3, 0.5, 0.7] {
        // 4·n^{1-γ} machines
        let cfg = ClusterConfig::new(1024, 4096).with_gamma(gamma);
        let c = Cluster::new(cfg.clone()).unwrap();
        let tree = KeyTree::new(&c);
        let bound = ((1.0 - gamma) / gamma - 1e-9).ceil() as usize + 1;
        assert_eq!(tree_depth(gamma), bound);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = c.small_count();
        let span = (1024f64).powf(1.0 - gamma) as usize;
        for key in 0u64..30 {
            let start = rng.random_range(0..k - span);
            let leaves: Vec<usize> = (start..start + span).collect();
            let t: AggregationTree = tree.materialize(&key, &leaves);
            assert!(t.measured_depth() <= bound);
            let below_root = &t.levels[..t.levels.len() - 1];
            assert!(below_root.iter().all(|l| l.values().all(|kids| kids.len() <= cfg.branching())));
        }
    }
}
