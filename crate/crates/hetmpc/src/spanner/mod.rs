//! O(k)-spanners: split the graph into clustering graphs by degree class,
//! build a (2k−1)-spanner of each (whole on the large machine when it fits,
//! otherwise by sub-sampled Baswana-Sen), and map the result back through
//! the stars.

mod bs;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Serialize;

pub use bs::{bs_rounds, greedy_spanner, modified_baswana_sen, BsOutcome, BsState};

use crate::graph::{SimGraph, WEdge};
use crate::primitives::tree::reduce_up_keeping;
use crate::primitives::{aggregate, disseminate_along, KeyTree};
use crate::simcore::{ceil_log2, distribute_edges, words_of, Cluster, MachineId, Outbox, Placement, Record};
use crate::{Error, Result};

/// Edge of a clustering graph between centers `a` and `b`, with the original
/// edge `(wu, wv)` it stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct AEdge {
    pub a: u64,
    pub b: u64,
    pub wu: u64,
    pub wv: u64,
}

impl AEdge {
    /// An edge that stands for itself.
    pub fn plain(a: u64, b: u64) -> Self {
        let (lo, hi) = (a.min(b), a.max(b));
        AEdge { a: lo, b: hi, wu: lo, wv: hi }
    }

    pub fn normalized(&self) -> Self {
        if self.a <= self.b {
            *self
        } else {
            AEdge { a: self.b, b: self.a, ..*self }
        }
    }

    pub fn witness(&self) -> WEdge {
        WEdge::unweighted(self.wu, self.wv).normalized()
    }
}

impl Record for AEdge {
    fn words(&self) -> usize {
        4
    }
    fn encode(&self, out: &mut Vec<u64>) {
        out.extend_from_slice(&[self.a, self.b, self.wu, self.wv]);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        let ((a, b), (wu, wv)) = <((u64, u64), (u64, u64))>::decode(input)?;
        Some(AEdge { a, b, wu, wv })
    }
}

/// Number of degree classes: max(1, ⌈log₂ Δ⌉).
pub fn level_count(delta: usize) -> usize {
    ceil_log2(delta).max(1)
}

/// Degree class [2^i, 2^{i+1}) of `d`, with the top class absorbing Δ.
pub fn degree_class(d: u64, levels: usize) -> usize {
    if d == 0 {
        return 0;
    }
    (63 - d.leading_zeros() as usize).min(levels - 1)
}

/// Sampling probability of level `i`: min(1, k²·i^{1+1/k} / 2^i); level 0 is always shipped whole.
pub fn level_probability(k: usize, i: usize) -> f64 {
    if i == 0 {
        return 1.0;
    }
    let k = k as f64;
    let x = k * k * (i as f64).powf(1.0 + 1.0 / k) / 2f64.powi(i as i32);
    x.min(1.0)
}

/// ℓ(1−1/x)^ℓ < x for x > 1 and ℓ ≥ 1, evaluated in logarithms.
pub fn exp_bound_holds(l: f64, x: f64) -> bool {
    l.ln() + l * (-1.0 / x).ln_1p() < x.ln()
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusteringDecomposition {
    pub delta: usize,
    pub levels: usize,
    pub degree: Vec<u64>,
    /// D_i for i ≥ 1 (D_0 = V is implied), as kept by the large machine
    pub hitting: Vec<Vec<u64>>,
    /// largest i with v ∈ D_i
    pub top: Vec<usize>,
    /// i_u
    pub reach: Vec<usize>,
    /// star center of every vertex; σ_u = u for centers
    pub sigma: Vec<u64>,
    /// (u, σ_u) for every non-center u
    pub stars: Vec<WEdge>,
    /// V_i = B_i = {u : top(u) ≥ i}
    pub vertices: Vec<Vec<u64>>,
    /// E_i, on the small machines: `edges[i][shard]`
    pub edges: Vec<Vec<Vec<AEdge>>>,
}

impl ClusteringDecomposition {
    pub fn level_edges(&self, i: usize) -> Vec<AEdge> {
        let mut es: Vec<AEdge> = self.edges[i].iter().flatten().copied().collect();
        es.sort();
        es
    }

    pub fn edge_count(&self, i: usize) -> usize {
        self.edges[i].iter().map(Vec::len).sum()
    }
}

/// Rounds of [`clustering_graphs`] for tree depth `d`.
pub fn clustering_rounds(depth: usize) -> usize {
    7 * depth + 6
}

fn bit(mask: &[u64], i: usize) -> bool {
    mask.get(i / 64).is_some_and(|w| w >> (i % 64) & 1 == 1)
}

fn or_into(acc: &mut Vec<u64>, other: Vec<u64>) {
    if acc.len() < other.len() {
        acc.resize(other.len(), 0);
    }
    for (a, b) in acc.iter_mut().zip(other) {
        *a |= b;
    }
}

/// Builds the stars and clustering graphs A_0..A_{L−1} of the graph whose
/// edges sit on the small machines in `shards`. `clustering_rounds(depth)` rounds.
pub fn clustering_graphs(
    cluster: &mut Cluster,
    tree: &KeyTree,
    n: usize,
    shards: &[Vec<WEdge>],
) -> Result<ClusteringDecomposition> {
    let nk = cluster.small_count();
    let label = "clustering";

    // degrees and Δ
    let deg_leaves: Vec<BTreeMap<u64, u64>> = shards
        .iter()
        .map(|es| {
            let mut m = BTreeMap::new();
            for e in es {
                *m.entry(e.u).or_insert(0) += 1;
                *m.entry(e.v).or_insert(0) += 1;
            }
            m
        })
        .collect();
    let (deg_map, routing) = aggregate(cluster, tree, &format!("{label}:degree"), deg_leaves, |a, b| *a += b)?;
    let mut degree = vec![0u64; n];
    for (&v, &d) in &deg_map {
        degree[v as usize] = d;
    }
    let delta = degree.iter().copied().max().unwrap_or(0) as usize;
    let levels = level_count(delta);
    let trials = ceil_log2(n).max(1);
    cluster.set_resident(MachineId::Large, cluster.resident(MachineId::Large) + 6 * n);

    // trial sets D_i^j, bit (i-1)*trials + j, sampled on the large machine
    let bits = (levels - 1) * trials;
    let words = bits.div_ceil(64);
    let mut rng = cluster.rng_for(MachineId::Large);
    let mut member: Vec<Vec<u64>> = vec![vec![0; words]; n];
    for i in 1..levels {
        let q = (i as f64 / 2f64.powi(i as i32)).min(1.0);
        for j in 0..trials {
            let b = (i - 1) * trials + j;
            for m in member.iter_mut() {
                if rng.random_bool(q) {
                    m[b / 64] |= 1 << (b % 64);
                }
            }
        }
    }
    let send: BTreeMap<u64, Vec<u64>> = member
        .iter()
        .enumerate()
        .filter(|(_, m)| m.iter().any(|&w| w != 0))
        .map(|(v, m)| (v as u64, m.clone()))
        .collect();
    let got = disseminate_along(cluster, tree, &format!("{label}:trials"), &routing, &send)?;

    // which trial sets each vertex has a neighbour in
    let near_leaves: Vec<BTreeMap<u64, Vec<u64>>> = shards
        .iter()
        .zip(&got)
        .map(|(es, mem)| {
            let mut m: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
            for e in es {
                for (x, y) in [(e.u, e.v), (e.v, e.u)] {
                    let entry = m.entry(x).or_default();
                    if let Some(my) = mem.get(&y) {
                        or_into(entry, my.clone());
                    }
                }
            }
            m
        })
        .collect();
    let (near, _) = aggregate(cluster, tree, &format!("{label}:near"), near_leaves, or_into)?;

    // patch every trial into a hitting set and keep the smallest per level
    let mut hitting: Vec<Vec<u64>> = vec![Vec::new(); levels];
    let mut top = vec![0usize; n];
    for i in 1..levels {
        let mut best: Option<Vec<u64>> = None;
        for j in 0..trials {
            let b = (i - 1) * trials + j;
            let set: Vec<u64> = (0..n as u64)
                .filter(|&u| {
                    let inside = bit(&member[u as usize], b);
                    let covered = near.get(&u).is_some_and(|m| bit(m, b));
                    let needs = degree[u as usize] > 0 && degree_class(degree[u as usize], levels) >= i;
                    inside || (needs && !covered)
                })
                .collect();
            if best.as_ref().is_none_or(|x| set.len() < x.len()) {
                best = Some(set);
            }
        }
        let set = best.unwrap_or_default();
        for &u in &set {
            top[u as usize] = top[u as usize].max(i);
        }
        hitting[i] = set;
    }

    // i_u and σ_u: the neighbour with the highest top, ties by random priority
    let tops: BTreeMap<u64, u64> = (0..n as u64).filter(|&v| top[v as usize] > 0).map(|v| (v, top[v as usize] as u64)).collect();
    let got = disseminate_along(cluster, tree, &format!("{label}:top"), &routing, &tops)?;
    let best_leaves: Vec<BTreeMap<u64, (u64, u64, u64)>> = (0..nk)
        .map(|s| {
            let mut rng = cluster.rng_for(MachineId::of_shard(s));
            let mut m: BTreeMap<u64, (u64, u64, u64)> = BTreeMap::new();
            for e in &shards[s] {
                for (x, y) in [(e.u, e.v), (e.v, e.u)] {
                    let t = got[s].get(&y).copied().unwrap_or(0);
                    // (top, inverted priority, neighbour); the largest wins
                    let cand = (t, rng.random::<u64>(), y);
                    m.entry(x).and_modify(|c| *c = (*c).max(cand)).or_insert(cand);
                }
            }
            m
        })
        .collect();
    let (best, _) = aggregate(cluster, tree, &format!("{label}:sigma"), best_leaves, |a, b| *a = (*a).max(b))?;
    let mut reach = vec![0usize; n];
    let mut sigma: Vec<u64> = (0..n as u64).collect();
    let mut stars = Vec::new();
    for u in 0..n {
        let (t, _, y) = best.get(&(u as u64)).copied().unwrap_or((0, 0, u as u64));
        reach[u] = top[u].max(t as usize);
        if top[u] < t as usize {
            sigma[u] = y;
            stars.push(WEdge::unweighted(u as u64, y).normalized());
        }
    }
    // V_i = B_i; a star center may itself be a leaf of a higher star, but σ_u ∈ B_{i_u} always
    let vertices: Vec<Vec<u64>> =
        (0..levels).map(|i| (0..n as u64).filter(|&u| top[u as usize] >= i).collect()).collect();
    cluster.set_resident(MachineId::Large, cluster.resident(MachineId::Large) + 3 * stars.len());

    // E_i with the smallest witness per center pair, left on the tree roots
    let info: BTreeMap<u64, (u64, u64)> = (0..n as u64).map(|v| (v, (sigma[v as usize], degree[v as usize]))).collect();
    let got = disseminate_along(cluster, tree, &format!("{label}:stars"), &routing, &info)?;
    let edge_leaves: Vec<BTreeMap<(u64, u64, u64), AEdge>> = shards
        .iter()
        .zip(&got)
        .map(|(es, inf)| {
            let mut m: BTreeMap<(u64, u64, u64), AEdge> = BTreeMap::new();
            for e in es {
                let ((su, du), (sv, dv)) = (inf[&e.u], inf[&e.v]);
                if su == sv {
                    continue;
                }
                let i = degree_class(du.min(dv), levels) as u64;
                let w = e.normalized();
                let ae = AEdge { a: su.min(sv), b: su.max(sv), wu: w.u, wv: w.v };
                m.entry((ae.a, ae.b, i)).and_modify(|x| *x = (*x).min(ae)).or_insert(ae);
            }
            m
        })
        .collect();
    let smaller = |x: &mut AEdge, y: AEdge| *x = (*x).min(y);
    let (roots, _) = reduce_up_keeping(cluster, tree, &format!("{label}:edges"), edge_leaves, &smaller, &|_| ())?;
    let mut edges: Vec<Vec<Vec<AEdge>>> = vec![vec![Vec::new(); nk]; levels];
    for (s, m) in roots.into_iter().enumerate() {
        for ((_, _, i), e) in m {
            edges[i as usize][s].push(e);
        }
        let id = MachineId::of_shard(s);
        let held: usize = (0..levels).map(|i| words_of(&edges[i][s])).sum();
        cluster.set_resident(id, cluster.resident(id) + held);
    }
    Ok(ClusteringDecomposition { delta, levels, degree, hitting, top, reach, sigma, stars, vertices, edges })
}

/// H = stars ∪ the original edges behind every per-level spanner edge.
/// Errors if an edge's witness does not belong to that edge of A_i.
pub fn combine_spanners(decomp: &ClusteringDecomposition, per_level: &[Vec<AEdge>]) -> Result<Vec<WEdge>> {
    let mut out: BTreeSet<WEdge> = decomp.stars.iter().copied().collect();
    for (i, h) in per_level.iter().enumerate() {
        for e in h {
            let (su, sv) = (decomp.sigma[e.wu as usize], decomp.sigma[e.wv as usize]);
            let d = decomp.degree[e.wu as usize].min(decomp.degree[e.wv as usize]);
            let fits = (su.min(sv), su.max(sv)) == (e.a.min(e.b), e.a.max(e.b)) && degree_class(d, decomp.levels) == i;
            if !fits {
                return Err(Error::Internal(format!("edge ({}, {}) of level {i} has no valid witness", e.a, e.b)));
            }
            out.insert(e.witness());
        }
    }
    Ok(out.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dispatch {
    /// shipped whole, greedy spanner on the large machine
    Whole,
    /// modified Baswana-Sen with sampling
    Sampled,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub vertices: usize,
    pub edges: usize,
    pub p: f64,
    pub dispatch: Dispatch,
    pub spanner_edges: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpannerOutcome {
    /// sorted, u < v, weight 1
    pub edges: Vec<WEdge>,
    pub k: usize,
    pub delta: usize,
    pub stars: usize,
    pub levels: Vec<LevelReport>,
}

/// Ships a whole clustering graph and runs the greedy spanner on the large
/// machine; idles for the rest of the sampled schedule so that every level
/// takes the same number of rounds.
fn whole_level(cluster: &mut Cluster, tree: &KeyTree, shards: &[Vec<AEdge>], k: usize) -> Result<Vec<AEdge>> {
    let mut out = Outbox::new();
    for (s, es) in shards.iter().enumerate() {
        for e in es {
            out.push(MachineId::of_shard(s), MachineId::Large, e);
        }
    }
    let inboxes = cluster.exchange("spanner:whole", out, &[])?;
    let mut es = Vec::new();
    for msg in &inboxes[0] {
        es.extend(msg.decode::<AEdge>()?);
    }
    for _ in 1..bs_rounds(tree.depth()) {
        cluster.exchange("spanner:wait", Outbox::new(), &[])?;
    }
    Ok(greedy_spanner(&es, k))
}

/// O(k)-spanner of an unweighted graph with stretch ≤ 6k−1.
pub fn spanner(cluster: &mut Cluster, graph: &SimGraph, k: usize, placement: Placement) -> Result<SpannerOutcome> {
    let n = graph.n;
    if k == 0 || (n > 1 && k > ceil_log2(n).max(1)) {
        return Err(Error::Precondition(format!("k = {k} must be in 1..=⌈log₂ n⌉")));
    }
    let tree = KeyTree::new(cluster);
    let edges: Vec<WEdge> = graph.edges.iter().map(|e| WEdge::unweighted(e.u, e.v).normalized()).collect();
    let shards = distribute_edges(cluster, &edges, placement)?;
    let decomp = clustering_graphs(cluster, &tree, n, &shards)?;

    let mut lanes = Vec::with_capacity(decomp.levels);
    let mut per_level = Vec::with_capacity(decomp.levels);
    let mut reports = Vec::with_capacity(decomp.levels);
    for i in 0..decomp.levels {
        let p = level_probability(k, i);
        let mut lane = cluster.fork(i);
        let (h, dispatch) = if p >= 1.0 {
            (whole_level(&mut lane, &tree, &decomp.edges[i], k)?, Dispatch::Whole)
        } else {
            let out = modified_baswana_sen(&mut lane, &tree, &decomp.vertices[i], &decomp.edges[i], k, p)?;
            (out.edges, Dispatch::Sampled)
        };
        reports.push(LevelReport {
            level: i,
            vertices: decomp.vertices[i].len(),
            edges: decomp.edge_count(i),
            p,
            dispatch,
            spanner_edges: h.len(),
        });
        per_level.push(h);
        lanes.push(lane);
    }
    cluster.join(lanes)?;
    let edges = combine_spanners(&decomp, &per_level)?;
    Ok(SpannerOutcome { edges, k, delta: decomp.delta, stars: decomp.stars.len(), levels: reports })
}
