mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use common::{all_pairs_stretch, degree_oracle, edge_stretch, gnm, gnp, pairs, random_tree};
use hetmpc::graph::{SimGraph, WEdge};
use hetmpc::primitives::KeyTree;
use hetmpc::simcore::{distribute_edges, Cluster, ClusterConfig, Placement};
use hetmpc::spanner::{
    bs_rounds, clustering_graphs, clustering_rounds, combine_spanners, degree_class, exp_bound_holds, level_count,
    modified_baswana_sen, spanner, AEdge, BsOutcome, ClusteringDecomposition, Dispatch,
};
use hetmpc::Error;

fn cluster_for(g: &SimGraph, seed: u64) -> Cluster {
    Cluster::new(ClusterConfig::new(g.n, g.m().max(1)).with_seed(seed)).unwrap()
}

fn decompose(g: &SimGraph, seed: u64) -> (Cluster, ClusteringDecomposition) {
    let mut c = cluster_for(g, seed);
    let tree = KeyTree::new(&c);
    let es: Vec<WEdge> = g.edges.iter().map(WEdge::normalized).collect();
    let shards = distribute_edges(&mut c, &es, Placement::Seeded).unwrap();
    let d = clustering_graphs(&mut c, &tree, g.n, &shards).unwrap();
    (c, d)
}

fn run_bs(g: &SimGraph, k: usize, p: f64, seed: u64) -> (Cluster, BsOutcome) {
    let mut c = cluster_for(g, seed);
    let tree = KeyTree::new(&c);
    let es: Vec<AEdge> = g.edges.iter().map(|e| AEdge::plain(e.u, e.v)).collect();
    let shards = distribute_edges(&mut c, &es, Placement::Seeded).unwrap();
    let vs: Vec<u64> = (0..g.n as u64).collect();
    let out = modified_baswana_sen(&mut c, &tree, &vs, &shards, k, p).unwrap();
    (c, out)
}

fn star(leaves: usize) -> SimGraph {
    SimGraph::new(leaves + 1, (1..=leaves as u64).map(|v| WEdge::unweighted(0, v)).collect()).unwrap()
}

fn aedge_pairs(es: &[AEdge]) -> Vec<(u64, u64)> {
    es.iter().map(|e| (e.a, e.b)).collect()
}

/// E_i rebuilt from σ and the degrees: per (center pair, class), the smallest original edge.
fn clustering_edges_oracle(g: &SimGraph, d: &ClusteringDecomposition) -> Vec<BTreeSet<AEdge>> {
    let deg = degree_oracle(g);
    let levels = level_count(deg.iter().copied().max().unwrap_or(0) as usize);
    let mut best: BTreeMap<(u64, u64, usize), (u64, u64)> = BTreeMap::new();
    for e in &g.edges {
        let (su, sv) = (d.sigma[e.u as usize], d.sigma[e.v as usize]);
        if su == sv {
            continue;
        }
        let i = degree_class(deg[e.u as usize].min(deg[e.v as usize]), levels);
        let w = (e.lo(), e.hi());
        let slot = best.entry((su.min(sv), su.max(sv), i)).or_insert(w);
        *slot = (*slot).min(w);
    }
    let mut out = vec![BTreeSet::new(); levels];
    for ((a, b, i), (wu, wv)) in best {
        out[i].insert(AEdge { a, b, wu, wv });
    }
    out
}

fn check_decomposition(g: &SimGraph, d: &ClusteringDecomposition) {
    let deg = degree_oracle(g);
    let adj = g.adjacency();
    assert_eq!(d.degree, deg);
    assert_eq!(d.delta as u64, deg.iter().copied().max().unwrap_or(0));
    assert_eq!(d.levels, level_count(d.delta));
    assert_eq!(d.vertices[0].len(), g.n);

    // hitting sets cover every vertex of degree ≥ 2^i
    for i in 1..d.levels {
        let set: BTreeSet<u64> = d.hitting[i].iter().copied().collect();
        for u in 0..g.n {
            if deg[u] >= 1 << i {
                assert!(set.contains(&(u as u64)) || adj[u].iter().any(|y| set.contains(y)), "u={u} i={i}");
            }
        }
    }
    // top, i_u and σ
    for u in 0..g.n {
        let top = (1..d.levels).filter(|&i| d.hitting[i].contains(&(u as u64))).max().unwrap_or(0);
        assert_eq!(d.top[u], top);
        let reach = adj[u].iter().map(|&y| d.top[y as usize]).chain([top]).max().unwrap();
        assert_eq!(d.reach[u], reach);
        let s = d.sigma[u];
        if s == u as u64 {
            assert!(top >= reach);
        } else {
            assert!(adj[u].contains(&s));
            assert!(d.top[s as usize] >= reach && top < reach);
        }
    }
    // one star edge per non-center, nothing else
    let stars: BTreeSet<WEdge> = (0..g.n)
        .filter(|&u| d.sigma[u] != u as u64)
        .map(|u| WEdge::unweighted(u as u64, d.sigma[u]).normalized())
        .collect();
    assert_eq!(d.stars.iter().copied().collect::<BTreeSet<_>>(), stars);
    assert_eq!(d.stars.len(), stars.len());

    // E_i against the oracle, endpoints in V_i
    let oracle = clustering_edges_oracle(g, d);
    for (i, want) in oracle.iter().enumerate() {
        let got: BTreeSet<AEdge> = d.level_edges(i).into_iter().collect();
        assert_eq!(&got, want, "level {i}");
        let vs: BTreeSet<u64> = d.vertices[i].iter().copied().collect();
        for e in &got {
            assert!(vs.contains(&e.a) && vs.contains(&e.b));
        }
    }
    // coverage: every edge is inside a star or represented in E_class
    let lookup: Vec<BTreeSet<(u64, u64)>> = oracle.iter().map(|s| s.iter().map(|e| (e.a, e.b)).collect()).collect();
    for e in &g.edges {
        let (su, sv) = (d.sigma[e.u as usize], d.sigma[e.v as usize]);
        let i = degree_class(deg[e.u as usize].min(deg[e.v as usize]), d.levels);
        assert!(su == sv || lookup[i].contains(&(su.min(sv), su.max(sv))), "edge ({}, {}) uncovered", e.u, e.v);
    }
}

#[test]
fn star_leaves_are_their_own_centers() {
    let g = star(8);
    let (_, d) = decompose(&g, 1);
    check_decomposition(&g, &d);
    assert_eq!(d.delta, 8);
    for v in 1..=8 {
        assert_eq!(d.degree[v], 1);
    }
    // leaves have degree 1, so every edge sits in class 0 or inside a star
    for i in 1..d.levels {
        assert_eq!(d.edge_count(i), 0);
    }
}

#[test]
fn decomposition_matches_oracle_on_assorted_graphs() {
    let path = SimGraph::new(40, (0..39).map(|v| WEdge::unweighted(v, v + 1)).collect()).unwrap();
    let graphs = [gnp(128, 0.1, 3), gnp(200, 0.03, 4), gnm(150, 4000, 1, 5), star(60), path];
    for (s, g) in graphs.iter().enumerate() {
        let (c, d) = decompose(g, 10 + s as u64);
        check_decomposition(g, &d);
        assert_eq!(c.violations().count(), 0);
    }
}

#[test]
fn clustering_sizes_stay_within_measured_constants() {
    let n = 256usize;
    for seed in 0..20 {
        let g = gnp(n, 0.1, 100 + seed);
        let (c, d) = decompose(&g, seed);
        assert_eq!(c.violations().count(), 0);
        for i in 0..d.levels {
            let (vi, ei) = (d.vertices[i].len() as f64, d.edge_count(i) as f64);
            assert!(ei <= 8.0 * n as f64 * 2f64.powi(i as i32), "seed {seed} level {i}: |E_i| = {ei}");
            let vb = 8.0 * n as f64 * (i.max(1) as f64) / 2f64.powi(i as i32);
            assert!(vi <= vb, "seed {seed} level {i}: |V_i| = {vi}");
        }
    }
}

#[test]
fn clustering_takes_fixed_rounds() {
    for (n, p) in [(64, 0.2), (256, 0.1), (300, 0.02)] {
        let g = gnp(n, p, n as u64);
        let mut c = cluster_for(&g, 1);
        let tree = KeyTree::new(&c);
        let shards = distribute_edges(&mut c, &g.edges, Placement::Seeded).unwrap();
        let before = c.rounds_used();
        clustering_graphs(&mut c, &tree, n, &shards).unwrap();
        assert_eq!(c.rounds_used() - before, clustering_rounds(tree.depth()));
    }
}

/// BFS from `c` through vertices whose level-i center is `c`.
fn cluster_radius(adj: &HashMap<u64, Vec<u64>>, members: &BTreeSet<u64>, c: u64) -> Option<usize> {
    let mut dist = HashMap::from([(c, 0usize)]);
    let mut q = VecDeque::from([c]);
    while let Some(x) = q.pop_front() {
        for &y in adj.get(&x).map(Vec::as_slice).unwrap_or(&[]) {
            if members.contains(&y) && !dist.contains_key(&y) {
                dist.insert(y, dist[&x] + 1);
                q.push_back(y);
            }
        }
    }
    members.iter().map(|v| dist.get(v).copied()).try_fold(0, |m, d| d.map(|d| m.max(d)))
}

fn check_bs_state(g: &SimGraph, out: &BsOutcome) {
    let st = &out.state;
    let k = st.k;
    assert_eq!(st.centers.len(), k + 1);
    assert!(st.centers[k].is_empty());
    for i in 1..=k {
        let prev: BTreeSet<u64> = st.centers[i - 1].iter().copied().collect();
        assert!(st.centers[i].iter().all(|c| prev.contains(c)));
    }
    let mut adj: HashMap<u64, Vec<u64>> = HashMap::new();
    for e in &out.edges {
        adj.entry(e.a).or_default().push(e.b);
        adj.entry(e.b).or_default().push(e.a);
    }
    for v in 0..g.n as u64 {
        let h = &st.history[&v];
        // c_0(v) = v, and the history has no holes by construction of the list
        assert_eq!(h[0], v);
        assert!(h.len() <= k);
        for (i, c) in h.iter().enumerate() {
            assert!(st.centers[i].contains(c));
            assert_eq!(st.center(v, i), Some(*c));
        }
        assert_eq!(st.center(v, h.len()), None);
    }
    // every level-i cluster lies within distance i of its center in H
    for i in 1..k {
        for &c in &st.centers[i] {
            let members: BTreeSet<u64> = st.history.iter().filter(|(_, h)| h.get(i) == Some(&c)).map(|(&v, _)| v).collect();
            let r = cluster_radius(&adj, &members, c).expect("cluster connected in H");
            assert!(r <= i, "cluster {c} at level {i} has radius {r}");
        }
    }
    // one removal edge per (removed vertex, adjacent prior-level cluster)
    let mut want: BTreeSet<(u64, u64)> = BTreeSet::new();
    for e in &g.edges {
        for (v, u) in [(e.u, e.v), (e.v, e.u)] {
            let i = st.history[&v].len();
            if st.history[&u].len() >= i {
                want.insert((v, st.history[&u][i - 1]));
            }
        }
    }
    assert_eq!(out.removal_edges, want.len());
}

#[test]
fn baswana_sen_with_full_sampling_is_a_3_spanner() {
    for seed in 0..5 {
        let g = gnp(64, 0.2, 200 + seed);
        let (c, out) = run_bs(&g, 2, 1.0, seed);
        assert_eq!(c.violations().count(), 0);
        check_bs_state(&g, &out);
        let stretch = all_pairs_stretch(g.n, &pairs(&g.edges), &aedge_pairs(&out.edges)).unwrap();
        assert!(stretch <= 3.0, "seed {seed}: stretch {stretch}");
        assert!(out.edges.len() <= g.m());
    }
}

#[test]
fn baswana_sen_with_k1_keeps_every_edge() {
    let g = gnp(80, 0.1, 7);
    let (_, out) = run_bs(&g, 1, 1.0, 3);
    assert!(out.state.centers[1].is_empty());
    assert!(out.state.history.values().all(|h| h.len() == 1));
    let want: BTreeSet<(u64, u64)> = pairs(&g.edges).into_iter().collect();
    let got: BTreeSet<(u64, u64)> = aedge_pairs(&out.edges).into_iter().collect();
    assert_eq!(got, want);
    assert_eq!(out.recluster_edges, 0);
}

#[test]
fn baswana_sen_subsampled_keeps_stretch_and_size() {
    let (n, k, p) = (512usize, 3usize, 0.25);
    let seeds = 50;
    let mut total = 0usize;
    for seed in 0..seeds {
        let g = gnp(n, 0.05, 300 + seed);
        let (c, out) = run_bs(&g, k, p, seed);
        assert_eq!(c.violations().count(), 0);
        assert_eq!(c.rounds_used(), bs_rounds(KeyTree::new(&c).depth()));
        check_bs_state(&g, &out);
        let s = edge_stretch(n, &pairs(&g.edges), &aedge_pairs(&out.edges)).unwrap();
        assert!(s <= 2 * k - 1, "seed {seed}: stretch {s}");
        total += out.edges.len();
    }
    let mean = total as f64 / seeds as f64;
    let bound = 8.0 * k as f64 * (n as f64).powf(1.0 + 1.0 / k as f64) / p;
    assert!(mean <= bound, "mean {mean} > {bound}");
}

#[test]
fn baswana_sen_rejects_k0_and_oversized_samples() {
    let g = gnp(64, 0.2, 1);
    let mut c = cluster_for(&g, 1);
    let tree = KeyTree::new(&c);
    let es: Vec<AEdge> = g.edges.iter().map(|e| AEdge::plain(e.u, e.v)).collect();
    let shards = distribute_edges(&mut c, &es, Placement::Seeded).unwrap();
    let vs: Vec<u64> = (0..64).collect();
    assert!(matches!(modified_baswana_sen(&mut c, &tree, &vs, &shards, 0, 1.0), Err(Error::Precondition(_))));
    // k−1 copies of every edge cannot fit the large machine
    let big = gnm(256, 20000, 1, 2);
    let mut c = Cluster::new(ClusterConfig::new(256, 20000)).unwrap();
    let tree = KeyTree::new(&c);
    let es: Vec<AEdge> = big.edges.iter().map(|e| AEdge::plain(e.u, e.v)).collect();
    let shards = distribute_edges(&mut c, &es, Placement::Seeded).unwrap();
    let vs: Vec<u64> = (0..256).collect();
    assert!(matches!(modified_baswana_sen(&mut c, &tree, &vs, &shards, 3, 1.0), Err(Error::Sim(_))));
}

#[test]
fn combining_whole_clustering_graphs_gives_stretch_5() {
    for seed in 0..5 {
        let g = gnp(128, 0.08, 400 + seed);
        let (_, d) = decompose(&g, seed);
        let per_level: Vec<Vec<AEdge>> = (0..d.levels).map(|i| d.level_edges(i)).collect();
        let h = combine_spanners(&d, &per_level).unwrap();
        let s = edge_stretch(g.n, &pairs(&g.edges), &pairs(&h)).unwrap();
        assert!(s <= 5, "seed {seed}: stretch {s}");
        let stretch = all_pairs_stretch(g.n, &pairs(&g.edges), &pairs(&h)).unwrap();
        assert!(stretch <= 5.0);
        assert!(h.len() <= d.stars.len() + (0..d.levels).map(|i| d.edge_count(i)).sum::<usize>());
    }
}

#[test]
fn combining_rejects_edges_without_a_witness() {
    let g = gnp(64, 0.2, 9);
    let (_, d) = decompose(&g, 1);
    let mut per_level: Vec<Vec<AEdge>> = (0..d.levels).map(|i| d.level_edges(i)).collect();
    let e = per_level.iter().flatten().next().copied().unwrap();
    per_level[0].push(AEdge { a: e.a, b: e.b + 1000, ..e });
    assert!(matches!(combine_spanners(&d, &per_level), Err(Error::Internal(_))));
}

#[test]
fn spanner_of_a_star_is_the_star() {
    let g = star(8);
    let mut c = cluster_for(&g, 2);
    let out = spanner(&mut c, &g, 2, Placement::Seeded).unwrap();
    assert_eq!(out.edges, g.edges.iter().map(WEdge::normalized).collect::<Vec<_>>());
    assert_eq!(all_pairs_stretch(g.n, &pairs(&g.edges), &pairs(&out.edges)), Some(1.0));
}

#[test]
fn spanner_of_a_tree_is_the_tree() {
    for seed in 0..5 {
        let es: Vec<WEdge> = random_tree(200, 1, seed).into_iter().map(|(u, v, _)| WEdge::unweighted(u, v)).collect();
        let g = SimGraph::new(200, es).unwrap();
        let mut c = cluster_for(&g, seed);
        let out = spanner(&mut c, &g, 2, Placement::Seeded).unwrap();
        let mut want: Vec<WEdge> = g.edges.iter().map(WEdge::normalized).collect();
        want.sort();
        assert_eq!(out.edges, want);
    }
}

#[test]
fn spanner_on_g128_has_stretch_at_most_11() {
    for seed in 0..5 {
        let g = gnp(128, 0.1, 500 + seed);
        let mut c = cluster_for(&g, seed);
        let out = spanner(&mut c, &g, 2, Placement::Seeded).unwrap();
        assert_eq!(c.violations().count(), 0);
        let s = all_pairs_stretch(g.n, &pairs(&g.edges), &pairs(&out.edges)).unwrap();
        assert!(s <= 11.0, "seed {seed}: stretch {s}");
    }
}

#[test]
fn spanner_k2_size_and_stretch_over_50_seeds() {
    let n = 256usize;
    let mut total = 0usize;
    for seed in 0..50 {
        let g = gnp(n, 0.1, 600 + seed);
        let mut c = cluster_for(&g, seed);
        let out = spanner(&mut c, &g, 2, Placement::Seeded).unwrap();
        assert_eq!(c.violations().count(), 0);
        assert_eq!(out.levels[0].dispatch, Dispatch::Whole);
        for l in &out.levels {
            assert_eq!(l.dispatch == Dispatch::Whole, l.p >= 1.0);
        }
        let s = all_pairs_stretch(n, &pairs(&g.edges), &pairs(&out.edges)).unwrap();
        assert!(s <= 11.0, "seed {seed}: stretch {s}");
        total += out.edges.len();
    }
    let mean = total as f64 / 50.0;
    assert!(mean <= 16.0 * (n as f64).powf(1.5), "mean size {mean}");
}

#[test]
fn spanner_with_k_log_n() {
    let g = gnm(256, 8192, 1, 11);
    let k = 8;
    let mut c = cluster_for(&g, 4);
    let out = spanner(&mut c, &g, k, Placement::Seeded).unwrap();
    assert_eq!(c.violations().count(), 0);
    let s = edge_stretch(g.n, &pairs(&g.edges), &pairs(&out.edges)).unwrap();
    assert!(s <= 6 * k - 1);
    assert!(out.edges.len() <= 8 * g.n * k);
    assert!(out.edges.len() <= g.m());
}

#[test]
fn spanner_rounds_do_not_depend_on_n_or_k() {
    let mut seen = BTreeSet::new();
    for n in [64usize, 128, 256, 512] {
        let g = gnm(n, 4 * n, 1, n as u64);
        for k in [2, 3] {
            let mut c = cluster_for(&g, 1);
            let depth = KeyTree::new(&c).depth();
            spanner(&mut c, &g, k, Placement::Seeded).unwrap();
            assert_eq!(c.rounds_used(), clustering_rounds(depth) + bs_rounds(depth));
            seen.insert(c.rounds_used());
        }
    }
    assert_eq!(seen.len(), 1, "{seen:?}");
}

#[test]
fn spanner_rejects_bad_k() {
    let g = gnp(256, 0.05, 1);
    let mut c = cluster_for(&g, 1);
    assert!(matches!(spanner(&mut c, &g, 0, Placement::Seeded), Err(Error::Precondition(_))));
    assert!(matches!(spanner(&mut c, &g, 9, Placement::Seeded), Err(Error::Precondition(_))));
}

#[test]
fn exp_bound_holds_on_the_grid() {
    // ℓ geometric over [1, 10⁶], x geometric over [1 + 2⁻¹⁰, 10⁴]
    let ls: Vec<f64> = (0..=120).map(|j| 10f64.powf(6.0 * j as f64 / 120.0)).collect();
    let (x0, x1) = (1.0 + 2f64.powi(-10), 1e4f64);
    let xs: Vec<f64> = (0..=200).map(|j| x0 * (x1 / x0).powf(j as f64 / 200.0)).collect();
    for &l in &ls {
        for &x in &xs {
            assert!(exp_bound_holds(l, x), "l={l} x={x}");
        }
    }
    // the maximum over ℓ sits near ℓ = x and is about x/e
    let x: f64 = 50.0;
    let peak = (1..1000).map(|l| l as f64 * (1.0 - 1.0 / x).powi(l)).fold(0.0, f64::max);
    assert!(peak < x && peak > x / 3.0);
}
