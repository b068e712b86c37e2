//! Minimum spanning forest: Borůvka contraction with growing select counts,
//! then random sampling and F-light filtering with path-maximum labels.

mod labels;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Serialize;

pub use labels::{flow_label_decode, flow_label_marker, path_max_scan, FlowLabel, LabelEntry, PathMax};

use crate::graph::{SimGraph, WEdge};
use crate::primitives::tree::reduce_up_keeping;
use crate::primitives::{aggregate, broadcast, disseminate, disseminate_along, global_reduce, keep_smallest, KeyTree};
use crate::simcore::{distribute_edges, words_of, Cluster, MachineId, Outbox, Placement, Record, SimError};
use crate::{Error, Result};

/// Edge between two supervertices, carrying the original edge it stands for.
/// Ordered by the original edge, so the order is the same at every level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CEdge {
    pub a: u64,
    pub b: u64,
    pub orig: WEdge,
}

impl CEdge {
    pub fn from_edge(e: &WEdge) -> Self {
        let orig = e.normalized();
        CEdge { a: orig.u, b: orig.v, orig }
    }

    fn pair(&self) -> (u64, u64) {
        (self.a.min(self.b), self.a.max(self.b))
    }
}

impl Ord for CEdge {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.orig, self.a, self.b).cmp(&(other.orig, other.a, other.b))
    }
}

impl PartialOrd for CEdge {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Record for CEdge {
    fn words(&self) -> usize {
        5
    }
    fn encode(&self, out: &mut Vec<u64>) {
        out.extend_from_slice(&[self.a, self.b, self.orig.u, self.orig.v, self.orig.w]);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        let (a, b) = <(u64, u64)>::decode(input)?;
        let orig = WEdge::decode(input)?;
        Some(CEdge { a, b, orig })
    }
}

/// Where the contraction stands. `label` (the map from original vertices to
/// supervertices) and `forest` live on the large machine; `shards` are the
/// contracted edges on the small machines.
#[derive(Debug, Clone)]
pub struct ContractionState {
    pub level: usize,
    pub label: Vec<u64>,
    pub shards: Vec<Vec<CEdge>>,
    pub forest: Vec<WEdge>,
}

impl ContractionState {
    pub fn initial(cluster: &mut Cluster, graph: &SimGraph, placement: Placement) -> Result<Self> {
        let edges: Vec<CEdge> = graph.edges.iter().map(CEdge::from_edge).collect();
        let shards = distribute_edges(cluster, &edges, placement)?;
        cluster.set_resident(MachineId::Large, graph.n);
        Ok(ContractionState { level: 0, label: (0..graph.n as u64).collect(), shards, forest: Vec::new() })
    }

    pub fn supervertices(&self) -> usize {
        self.label.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn edge_count(&self) -> usize {
        self.shards.iter().map(Vec::len).sum()
    }

    fn large_words(&self) -> usize {
        self.label.len() + 3 * self.forest.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StepStats {
    pub select: usize,
    pub vertices_before: usize,
    pub vertices_after: usize,
    pub edges_after: usize,
}

/// Union-find over vertex ids, with a per-root threshold used by the merge rule.
struct Merge {
    parent: BTreeMap<u64, u64>,
    /// lightest truncation point among the members, `None` if no member list was cut
    cut: BTreeMap<u64, Option<WEdge>>,
}

impl Merge {
    fn find(&mut self, x: u64) -> u64 {
        let mut r = x;
        while let Some(&p) = self.parent.get(&r) {
            if p == r {
                break;
            }
            r = p;
        }
        let mut y = x;
        while y != r {
            let next = self.parent[&y];
            self.parent.insert(y, r);
            y = next;
        }
        r
    }

    fn admits(&self, root: u64, e: &WEdge) -> bool {
        self.cut.get(&root).copied().flatten().is_none_or(|t| *e <= t)
    }
}

fn lightest_lists(shards: &[Vec<CEdge>], s: usize) -> Vec<BTreeMap<u64, Vec<CEdge>>> {
    shards
        .iter()
        .map(|es| {
            let mut m: BTreeMap<u64, Vec<CEdge>> = BTreeMap::new();
            for e in es {
                m.entry(e.a).or_default().push(*e);
                m.entry(e.b).or_default().push(*e);
            }
            for l in m.values_mut() {
                l.sort();
                l.truncate(s);
            }
            m
        })
        .collect()
}

/// One contraction step: every supervertex hands its `s` lightest edges to the
/// large machine, which merges along them lightest first. An edge is merged only
/// if it is provably the lightest edge leaving the piece on one of its sides,
/// i.e. no member of that piece had its list cut below the edge. Afterwards the
/// small machines rename endpoints, drop loops and keep the lightest of parallel edges.
pub fn boruvka_step(
    cluster: &mut Cluster,
    tree: &KeyTree,
    state: ContractionState,
    s: usize,
) -> Result<(ContractionState, StepStats)> {
    let s = s.max(1);
    let label = format!("boruvka{}", state.level);
    let before = state.supervertices();
    let need = before.saturating_mul(s).saturating_mul(CEdge::from_edge(&WEdge::new(0, 1, 1)).words() + 2);
    if need > cluster.large_budget() {
        return Err(SimError::Capacity {
            what: format!("{s} lightest edges for each of {before} supervertices"),
            needed: need,
            available: cluster.large_budget(),
        }
        .into());
    }

    let (lists, routing) = aggregate(cluster, tree, &label, lightest_lists(&state.shards, s), keep_smallest(s))?;

    let mut merge = Merge { parent: BTreeMap::new(), cut: BTreeMap::new() };
    let mut collected: BTreeSet<CEdge> = BTreeSet::new();
    for (&v, l) in &lists {
        merge.parent.insert(v, v);
        merge.cut.insert(v, if l.len() >= s { l.last().map(|e| e.orig) } else { None });
        collected.extend(l.iter().copied());
    }
    let mut forest = state.forest;
    for e in &collected {
        let (ra, rb) = (merge.find(e.a), merge.find(e.b));
        if ra == rb || !(merge.admits(ra, &e.orig) || merge.admits(rb, &e.orig)) {
            continue;
        }
        let cut = match (merge.cut[&ra], merge.cut[&rb]) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        };
        // the smaller id becomes the root so that it names the merged piece
        let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
        merge.parent.insert(gone, keep);
        merge.cut.insert(keep, cut);
        forest.push(e.orig);
    }
    let ids: Vec<u64> = merge.parent.keys().copied().collect();
    let renamed: BTreeMap<u64, u64> =
        ids.into_iter().filter_map(|v| Some((v, merge.find(v))).filter(|(v, r)| v != r)).collect();

    let got = disseminate_along(cluster, tree, &label, &routing, &renamed)?;
    let leaves: Vec<BTreeMap<(u64, u64), CEdge>> = state
        .shards
        .iter()
        .zip(&got)
        .map(|(es, names)| {
            let mut m: BTreeMap<(u64, u64), CEdge> = BTreeMap::new();
            for e in es {
                let a = names.get(&e.a).copied().unwrap_or(e.a);
                let b = names.get(&e.b).copied().unwrap_or(e.b);
                if a == b {
                    continue;
                }
                let e = CEdge { a, b, orig: e.orig };
                m.entry(e.pair()).and_modify(|x| *x = (*x).min(e)).or_insert(e);
            }
            m
        })
        .collect();
    let lighter = |x: &mut CEdge, y: CEdge| *x = (*x).min(y);
    let (roots, _) = reduce_up_keeping(cluster, tree, &format!("{label}:dedup"), leaves, &lighter, &|_| ())?;
    let shards: Vec<Vec<CEdge>> = roots.into_iter().map(|m| m.into_values().collect()).collect();
    for (i, (old, new)) in state.shards.iter().zip(&shards).enumerate() {
        let id = MachineId::of_shard(i);
        cluster.set_resident(id, cluster.resident(id).saturating_sub(words_of(old)) + words_of(new));
    }
    let mut label_map = state.label;
    for x in label_map.iter_mut() {
        if let Some(&r) = renamed.get(x) {
            *x = r;
        }
    }
    let next = ContractionState { level: state.level + 1, label: label_map, shards, forest };
    cluster.set_resident(MachineId::Large, next.large_words());
    let stats = StepStats {
        select: s,
        vertices_before: before,
        vertices_after: next.supervertices(),
        edges_after: next.edge_count(),
    };
    Ok((next, stats))
}

/// Borůvka steps for the near-linear regime: ⌈log₂ max(1, log₂(m/n))⌉, and none when m ≤ 2n.
pub fn boruvka_steps(n: usize, m: usize) -> usize {
    if m <= 2 * n {
        return 0;
    }
    let r = (m as f64 / n as f64).log2().max(1.0);
    (r.log2() - 1e-9).ceil().max(0.0) as usize
}

/// Steps for a large machine with n^{1+f} memory: ⌈log₂(log_n(m/n) / f)⌉, at least 0.
pub fn boruvka_steps_superlinear(n: usize, m: usize, f: f64) -> usize {
    if m <= n {
        return 0;
    }
    let x = (m as f64 / n as f64).ln() / (n as f64).ln() / f;
    if x <= 1.0 {
        return 0;
    }
    (x.log2() - 1e-9).ceil() as usize
}

/// Select count 2^{2^i}, saturating.
pub fn select_count(i: usize) -> usize {
    if i >= 6 {
        usize::MAX
    } else {
        1usize.checked_shl(1 << i).unwrap_or(usize::MAX)
    }
}

/// Select count ⌊n^{2^i f}⌋ for the superlinear regime.
pub fn select_count_superlinear(n: usize, i: usize, f: f64) -> usize {
    let e = (1u64 << i.min(62)) as f64 * f;
    let x = (n as f64).powf(e);
    if x >= usize::MAX as f64 {
        usize::MAX
    } else {
        (x + 1e-9).floor().max(1.0) as usize
    }
}

pub fn doubly_exp_boruvka(
    cluster: &mut Cluster,
    tree: &KeyTree,
    mut state: ContractionState,
    t: usize,
    select: impl Fn(usize) -> usize,
) -> Result<(ContractionState, Vec<StepStats>)> {
    let mut stats = Vec::with_capacity(t);
    for i in 0..t {
        let (next, st) = boruvka_step(cluster, tree, state, select(i))?;
        state = next;
        stats.push(st);
    }
    Ok((state, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Abort {
    SampleTooLarge,
    TooManyLight,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionStats {
    pub sample: usize,
    pub light: Option<usize>,
    pub aborted: Option<Abort>,
}

/// One sampling repetition on the contracted graph. On success the large
/// machine ends up with the F-light edges, which contain the minimum spanning
/// forest of the contracted graph.
pub struct Repetition {
    pub stats: RepetitionStats,
    pub light: Vec<CEdge>,
}

/// Minimum spanning forest of `edges` under the edge order, over supervertex endpoints.
fn kruskal_local(edges: &[CEdge]) -> Vec<CEdge> {
    let mut es = edges.to_vec();
    es.sort();
    let mut parent: BTreeMap<u64, u64> = BTreeMap::new();
    fn find(p: &mut BTreeMap<u64, u64>, x: u64) -> u64 {
        let mut r = x;
        while let Some(&q) = p.get(&r) {
            if q == r {
                break;
            }
            r = q;
        }
        let mut y = x;
        while y != r {
            let next = p[&y];
            p.insert(y, r);
            y = next;
        }
        r
    }
    let mut out = Vec::new();
    for e in es {
        parent.entry(e.a).or_insert(e.a);
        parent.entry(e.b).or_insert(e.b);
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        if ra != rb {
            parent.insert(ra, rb);
            out.push(e);
        }
    }
    out
}

/// Each small machine keeps each of its edges with probability `p` from its own
/// random stream; the sample is counted first and shipped to the large machine
/// only if it fits a quarter of its budget. `Ok(None)` means this repetition aborts.
pub fn kkt_sample(
    cluster: &mut Cluster,
    tree: &KeyTree,
    state: &ContractionState,
    p: f64,
) -> Result<(usize, Option<Vec<CEdge>>)> {
    let k = cluster.small_count();
    let label = format!("kkt{}", state.level);
    let sampled: Vec<Vec<CEdge>> = (0..k)
        .map(|s| {
            let mut rng = cluster.rng_for(MachineId::of_shard(s));
            state.shards[s].iter().filter(|_| p >= 1.0 || (p > 0.0 && rng.random_bool(p))).copied().collect()
        })
        .collect();
    let counts = sampled.iter().map(|x| Some(x.len() as u64)).collect();
    let sample = global_reduce(cluster, tree, &format!("{label}:count"), counts, &|a, b| *a += b)?.unwrap_or(0) as usize;
    let fits = sample * 5 <= cluster.large_budget() / 4;
    broadcast(cluster, tree, &format!("{label}:go"), &fits)?;
    if !fits {
        return Ok((sample, None));
    }
    let mut out = Outbox::new();
    for (s, es) in sampled.iter().enumerate() {
        for e in es {
            out.push(MachineId::of_shard(s), MachineId::Large, e);
        }
    }
    let inboxes = cluster.exchange(&format!("{label}:sample"), out, &[])?;
    let mut gp: Vec<CEdge> = Vec::with_capacity(sample);
    for msg in &inboxes[0] {
        gp.extend(msg.decode::<CEdge>()?);
    }
    Ok((sample, Some(gp)))
}

/// Sends every vertex's label to the machines holding its edges; there each
/// edge is kept iff it is F-light. The count is aggregated first and the
/// edges reach the large machine only if there are at most `limit` of them
/// and they fit half its budget. Vertices without a label are alone in F.
pub fn f_light_filter(
    cluster: &mut Cluster,
    tree: &KeyTree,
    state: &ContractionState,
    labels: &BTreeMap<u64, FlowLabel>,
    limit: f64,
) -> Result<(usize, Option<Vec<CEdge>>)> {
    let label = format!("kkt{}", state.level);
    let holders: Vec<BTreeSet<u64>> =
        state.shards.iter().map(|es| es.iter().flat_map(|e| [e.a, e.b]).collect()).collect();
    let got = disseminate(cluster, tree, &format!("{label}:labels"), labels, &holders)?;
    let light: Vec<Vec<CEdge>> = state
        .shards
        .iter()
        .zip(&got)
        .map(|(es, ls)| {
            let of = |v: u64| ls.get(&v).cloned().unwrap_or_else(|| FlowLabel::singleton(v));
            es.iter()
                .filter(|e| match flow_label_decode(&of(e.a), &of(e.b)) {
                    PathMax::DifferentComponents => true,
                    PathMax::MaxWeight(w) => e.orig.w <= w,
                })
                .copied()
                .collect()
        })
        .collect();
    let counts = light.iter().map(|x| Some(x.len() as u64)).collect();
    let nlight = global_reduce(cluster, tree, &format!("{label}:light"), counts, &|a, b| *a += b)?.unwrap_or(0) as usize;
    let ok = nlight as f64 <= limit && nlight * 5 <= cluster.large_budget() / 2;
    broadcast(cluster, tree, &format!("{label}:go"), &ok)?;
    if !ok {
        return Ok((nlight, None));
    }
    let mut out = Outbox::new();
    for (s, es) in light.iter().enumerate() {
        for e in es {
            out.push(MachineId::of_shard(s), MachineId::Large, e);
        }
    }
    let inboxes = cluster.exchange(&format!("{label}:light"), out, &[])?;
    let mut edges = Vec::with_capacity(nlight);
    for msg in &inboxes[0] {
        edges.extend(msg.decode::<CEdge>()?);
    }
    Ok((nlight, Some(edges)))
}

/// Labels for the spanning forest of `edges`, as the large machine builds them.
pub fn forest_labels(edges: &[CEdge]) -> Result<(Vec<CEdge>, BTreeMap<u64, FlowLabel>)> {
    let f = kruskal_local(edges);
    let triples: Vec<(u64, u64, u64)> = f.iter().map(|e| (e.a, e.b, e.orig.w)).collect();
    let labels = flow_label_marker(&triples, &[])?;
    Ok((f, labels))
}

/// One sampling repetition: sample, spanning forest of the sample with its
/// labels on the large machine, then F-light filtering with the limit
/// `alpha · n′ / p`. On success the large machine holds the F-light edges,
/// which contain the minimum spanning forest of the contracted graph.
pub fn kkt_repetition(
    cluster: &mut Cluster,
    tree: &KeyTree,
    state: &ContractionState,
    p: f64,
    alpha: f64,
) -> Result<Repetition> {
    let (sample, gp) = kkt_sample(cluster, tree, state, p)?;
    let Some(gp) = gp else {
        return Ok(Repetition {
            stats: RepetitionStats { sample, light: None, aborted: Some(Abort::SampleTooLarge) },
            light: Vec::new(),
        });
    };
    let (_, labels) = forest_labels(&gp)?;
    let base = cluster.resident(MachineId::Large);
    let label_words: usize = labels.values().map(|l| l.words() + 1).sum();
    cluster.set_resident(MachineId::Large, base + 5 * gp.len() + label_words);
    let limit = alpha * state.supervertices() as f64 / p.max(f64::MIN_POSITIVE);
    let (nlight, edges) = f_light_filter(cluster, tree, state, &labels, limit)?;
    cluster.set_resident(MachineId::Large, base);
    let aborted = if edges.is_some() { None } else { Some(Abort::TooManyLight) };
    Ok(Repetition {
        stats: RepetitionStats { sample, light: Some(nlight), aborted },
        light: edges.unwrap_or_default(),
    })
}

#[derive(Debug, Clone)]
pub struct MstOptions {
    pub alpha: f64,
    /// repetitions; `None` means ⌈2·log₂ n⌉
    pub repetitions: Option<usize>,
    pub placement: Placement,
}

impl Default for MstOptions {
    fn default() -> Self {
        MstOptions { alpha: 4.0, repetitions: None, placement: Placement::Seeded }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MstOutcome {
    /// minimum spanning forest, sorted by (w, u, v) with u < v
    pub edges: Vec<WEdge>,
    pub weight: u64,
    pub t: usize,
    pub steps: Vec<StepStats>,
    pub p: f64,
    pub repetitions: Vec<RepetitionStats>,
    /// index of the repetition whose edges were used
    pub succeeded: usize,
    pub components: usize,
}

fn finish(
    cluster: &mut Cluster,
    tree: &KeyTree,
    graph: &SimGraph,
    state: ContractionState,
    t: usize,
    steps: Vec<StepStats>,
    p: f64,
    opts: &MstOptions,
) -> Result<MstOutcome> {
    let reps = opts.repetitions.unwrap_or(2 * crate::simcore::ceil_log2(graph.n).max(1));
    let mut lanes = Vec::new();
    let mut stats = Vec::new();
    let mut winner: Option<(usize, Vec<CEdge>)> = None;
    for r in 0..reps {
        let mut lane = cluster.fork(r);
        let rep = kkt_repetition(&mut lane, tree, &state, p, opts.alpha)?;
        lanes.push(lane);
        stats.push(rep.stats.clone());
        if rep.stats.aborted.is_none() {
            winner = Some((r, rep.light));
            break;
        }
    }
    cluster.join(lanes)?;
    let Some((succeeded, light)) = winner else {
        return Err(Error::RunFailed(format!("all {reps} sampling repetitions aborted")));
    };
    let mut edges = state.forest;
    edges.extend(kruskal_local(&light).into_iter().map(|e| e.orig));
    edges.sort_by_key(|e| (e.w, e.u, e.v));
    let weight = edges.iter().map(|e| e.w).sum();
    let components = graph.n - edges.len();
    Ok(MstOutcome { edges, weight, t, steps, p, repetitions: stats, succeeded, components })
}

/// Minimum spanning forest with a near-linear large machine.
pub fn mst(cluster: &mut Cluster, graph: &SimGraph, opts: &MstOptions) -> Result<MstOutcome> {
    let tree = KeyTree::new(cluster);
    let (n, m) = (graph.n, graph.m());
    let state = ContractionState::initial(cluster, graph, opts.placement)?;
    let t = boruvka_steps(n, m);
    let (state, steps) = doubly_exp_boruvka(cluster, &tree, state, t, select_count)?;
    let p = if m == 0 { 1.0 } else { (n as f64 / m as f64).min(1.0) };
    finish(cluster, &tree, graph, state, t, steps, p, opts)
}

/// Minimum spanning forest when the large machine holds n^{1+f} words.
pub fn mst_superlinear(cluster: &mut Cluster, graph: &SimGraph, opts: &MstOptions) -> Result<MstOutcome> {
    let f = cluster
        .config()
        .f()
        .ok_or_else(|| Error::Precondition("superlinear MST needs the exponent f".into()))?;
    let tree = KeyTree::new(cluster);
    let (n, m) = (graph.n, graph.m());
    let state = ContractionState::initial(cluster, graph, opts.placement)?;
    let t = boruvka_steps_superlinear(n, m, f);
    let (state, steps) = doubly_exp_boruvka(cluster, &tree, state, t, |i| select_count_superlinear(n, i, f))?;
    let exp = (1u64 << t.min(62)) as f64 * f + f;
    let p = (n as f64).powf(-exp).min(1.0);
    finish(cluster, &tree, graph, state, t, steps, p, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_counts() {
        assert_eq!(boruvka_steps(256, 256), 0);
        assert_eq!(boruvka_steps(256, 512), 0);
        assert_eq!(boruvka_steps(1024, 65536), 3);
        assert_eq!(boruvka_steps(512, 8192), 2);
        assert_eq!(boruvka_steps(256, 4096), 2);
        assert_eq!(boruvka_steps_superlinear(256, 65536, 0.5), 1);
        assert_eq!(boruvka_steps_superlinear(128, 2048, 0.5), 1);
        assert_eq!(select_count(0), 2);
        assert_eq!(select_count(2), 16);
        assert_eq!(select_count_superlinear(256, 0, 0.125), 2);
        assert_eq!(select_count_superlinear(256, 2, 0.125), 16);
        assert_eq!(select_count_superlinear(128, 0, 0.5), 11);
    }

    #[test]
    fn cedge_order_follows_original_edge() {
        let x = CEdge { a: 9, b: 3, orig: WEdge::new(1, 2, 5) };
        let y = CEdge { a: 0, b: 1, orig: WEdge::new(0, 7, 5) };
        assert!(y < x);
        let mut w = Vec::new();
        x.encode(&mut w);
        assert_eq!(CEdge::decode(&mut w.as_slice()), Some(x));
    }
}
