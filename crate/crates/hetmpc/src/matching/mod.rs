//! Maximal matching. Low-degree vertices are matched on the small machines,
//! high-degree vertices by the large machine from a few random incident
//! edges each, and whatever is left is small enough to finish centrally.

mod phase1;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Serialize;

pub use phase1::{LowDegreeMatch, LowDegreeMatcher, RankedProposals};

use crate::graph::{SimGraph, WEdge};
use crate::primitives::{
    aggregate, broadcast, disseminate, disseminate_along, global_reduce, het_sort_by_part, DirEdge, KeyTree,
};
use crate::simcore::{ceil_log2, distribute_edges, Cluster, MachineId, Outbox, Placement};
use crate::{Error, Result};

/// Rank range {1, …, min(n⁵, 2⁶³)}.
pub fn rank_range(n: usize) -> u64 {
    (n as u64).checked_pow(5).map_or(1 << 63, |r| r.clamp(1, 1 << 63))
}

/// d = max(1, ⌈2m/n⌉).
pub fn average_degree(n: usize, m: usize) -> u64 {
    (2 * m).div_ceil(n.max(1)).max(1) as u64
}

/// Number of lowest-ranked edges collected per high-degree vertex: 2·d·⌈log₂ n⌉.
pub fn sample_size(n: usize, d: u64) -> usize {
    2 * d as usize * ceil_log2(n).max(1)
}

/// Rounds after the low-degree phase, for tree depth `d`.
pub fn post_phase1_rounds(depth: usize) -> usize {
    5 * depth + 15
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct MatchingReport {
    pub d: u64,
    pub low: usize,
    pub high: usize,
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    /// |E″| of every attempt
    pub residual: Vec<usize>,
    /// edges collected for the high-degree vertices, over all attempts
    pub collected: usize,
    pub phase1_iterations: usize,
    pub rank_resamples: usize,
    pub attempts: usize,
    pub setup_rounds: usize,
    pub phase1_rounds: usize,
    pub post_rounds: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchingOutcome {
    /// sorted, u < v
    pub matching: Vec<WEdge>,
    pub report: MatchingReport,
}

struct Mate {
    partner: BTreeMap<u64, u64>,
}

impl Mate {
    fn free(&self, v: u64) -> bool {
        !self.partner.contains_key(&v)
    }

    fn join(&mut self, u: u64, v: u64) {
        self.partner.insert(u, v);
        self.partner.insert(v, u);
    }

    fn greedy(&mut self, edges: &[WEdge]) -> Vec<WEdge> {
        let mut out = Vec::new();
        for e in edges {
            if e.u != e.v && self.free(e.u) && self.free(e.v) {
                self.join(e.u, e.v);
                out.push(*e);
            }
        }
        out
    }
}

fn ship_to_large(cluster: &mut Cluster, label: &str, shards: &[Vec<WEdge>]) -> Result<Vec<WEdge>> {
    let mut out = Outbox::new();
    for (s, es) in shards.iter().enumerate() {
        for e in es {
            out.push(MachineId::of_shard(s), MachineId::Large, e);
        }
    }
    let inboxes = cluster.exchange(label, out, &[])?;
    let mut got = Vec::new();
    for msg in &inboxes[0] {
        got.extend(msg.decode::<WEdge>()?);
    }
    got.sort();
    Ok(got)
}

struct Phase2 {
    edges: Vec<WEdge>,
    collected: usize,
    resamples: usize,
}

/// Ranks every edge at a high-degree endpoint, sorts the copies by (vertex,
/// rank) and lets the large machine read the lowest-ranked ones of each
/// high vertex; then matches the high vertices greedily in id order.
/// `2·depth + 10` rounds per ranking.
#[allow(clippy::too_many_arguments)]
fn phase2(
    cluster: &mut Cluster,
    tree: &KeyTree,
    shards: &[Vec<WEdge>],
    high: &[BTreeSet<u64>],
    high_all: &[u64],
    degree: &BTreeMap<u64, u64>,
    s: usize,
    mate: &mut Mate,
) -> Result<Phase2> {
    let n = cluster.config().n;
    let range = rank_range(n);
    let mut collected = 0;
    for attempt in 0..2 {
        let copies: Vec<Vec<DirEdge>> = shards
            .iter()
            .enumerate()
            .map(|(i, es)| {
                let mut rng = cluster.rng_for(MachineId::of_shard(i));
                let mut out = Vec::new();
                for e in es {
                    let r = rng.random_range(1..=range);
                    for (x, y) in [(e.u, e.v), (e.v, e.u)] {
                        if high[i].contains(&x) {
                            out.push(DirEdge { src: x, w: r, dst: y });
                        }
                    }
                }
                out
            })
            .collect();
        let layout = het_sort_by_part(cluster, tree, "phase2:sort", copies)?;

        // queries (v, count) to the machines holding v's lowest-ranked copies
        let mut out = Outbox::new();
        for &v in high_all {
            let mut need = s.min(degree[&v] as usize) as u64;
            for &(id, cnt) in layout.spread.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
                if need == 0 {
                    break;
                }
                let c = need.min(cnt);
                out.push(MachineId::Large, id, &(v, c));
                need -= c;
            }
        }
        let inboxes = cluster.exchange("phase2:query", out, &[])?;
        let mut out = Outbox::new();
        for (slot, msgs) in inboxes.iter().enumerate().skip(1) {
            let held = &layout.layout.shards[slot - 1];
            for msg in msgs {
                for (v, c) in msg.decode::<(u64, u64)>()? {
                    let start = held.partition_point(|e| e.src < v);
                    for e in &held[start..(start + c as usize).min(held.len())] {
                        out.push(MachineId::from_slot(slot), MachineId::Large, e);
                    }
                }
            }
        }
        let inboxes = cluster.exchange("phase2:collect", out, &[])?;
        let mut lists: BTreeMap<u64, Vec<DirEdge>> = BTreeMap::new();
        for msg in &inboxes[0] {
            for e in msg.decode::<DirEdge>()? {
                lists.entry(e.src).or_default().push(e);
            }
        }
        collected += lists.values().map(Vec::len).sum::<usize>();
        let collision = lists.values_mut().any(|l| {
            l.sort();
            l.windows(2).any(|w| w[0].w == w[1].w)
        });
        if collision {
            if attempt == 1 {
                return Err(Error::RunFailed("edge ranks collided twice".into()));
            }
            continue;
        }
        let mut edges = Vec::new();
        for (&v, l) in &lists {
            if !mate.free(v) {
                continue;
            }
            if let Some(e) = l.iter().find(|e| mate.free(e.dst)) {
                mate.join(v, e.dst);
                edges.push(WEdge::unweighted(v, e.dst).normalized());
            }
        }
        return Ok(Phase2 { edges, collected, resamples: attempt });
    }
    unreachable!("the second attempt returns")
}

/// Maximal matching with the default low-degree procedure.
pub fn maximal_matching(cluster: &mut Cluster, graph: &SimGraph, placement: Placement) -> Result<MatchingOutcome> {
    maximal_matching_with(cluster, graph, placement, &RankedProposals::default())
}

/// Maximal matching of an unweighted simple graph, with a pluggable
/// procedure for the low-degree part. Fails an attempt when more than 2n
/// edges survive the first two phases and retries once.
pub fn maximal_matching_with(
    cluster: &mut Cluster,
    graph: &SimGraph,
    placement: Placement,
    matcher: &dyn LowDegreeMatcher,
) -> Result<MatchingOutcome> {
    let n = graph.n;
    let tree = KeyTree::new(cluster);
    let start = cluster.rounds_used();
    let edges: Vec<WEdge> = graph.edges.iter().map(WEdge::normalized).collect();
    let shards = distribute_edges(cluster, &edges, placement)?;

    // degrees, then every holder learns which of its vertices are high
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
    let (degree, routing) = aggregate(cluster, &tree, "matching:degree", deg_leaves, |a, b| *a += b)?;
    let d = average_degree(n, graph.m());
    let high_set: BTreeMap<u64, u64> = degree.iter().filter(|(_, &x)| x > d * d).map(|(&v, _)| (v, 1)).collect();
    let flags = disseminate_along(cluster, &tree, "matching:high", &routing, &high_set)?;
    let high: Vec<BTreeSet<u64>> = flags.iter().map(|m| m.keys().copied().collect()).collect();
    let high_all: Vec<u64> = high_set.keys().copied().collect();
    cluster.set_resident(MachineId::Large, 2 * degree.len());
    let mut report = MatchingReport {
        d,
        high: high_set.len(),
        low: n - high_set.len(),
        setup_rounds: cluster.rounds_used() - start,
        ..Default::default()
    };
    let s = sample_size(n, d);

    for attempt in 0..2 {
        report.attempts = attempt + 1;
        let mut mate = Mate { partner: BTreeMap::new() };

        let p1 = cluster.rounds_used();
        let low: Vec<Vec<WEdge>> = shards
            .iter()
            .zip(&high)
            .map(|(es, h)| es.iter().filter(|e| !h.contains(&e.u) && !h.contains(&e.v)).copied().collect())
            .collect();
        let m1 = matcher.run(cluster, &tree, &low)?;
        report.phase1_iterations += m1.iterations;
        let post = cluster.rounds_used();
        report.phase1_rounds += post - p1;

        let m1 = ship_to_large(cluster, "matching:m1", &m1.matched)?;
        for e in &m1 {
            if !(mate.free(e.u) && mate.free(e.v)) {
                return Err(Error::Internal(format!("low-degree matcher reused a vertex of ({}, {})", e.u, e.v)));
            }
            mate.join(e.u, e.v);
        }
        cluster.set_resident(MachineId::Large, 2 * degree.len() + 2 * mate.partner.len());

        let p2 = phase2(cluster, &tree, &shards, &high, &high_all, &degree, s, &mut mate)?;
        report.collected += p2.collected;
        report.rank_resamples += p2.resamples;
        cluster.set_resident(MachineId::Large, 2 * degree.len() + 2 * mate.partner.len());

        // residual edges E″ with both endpoints free
        let status: BTreeMap<u64, u64> = mate.partner.keys().map(|&v| (v, 1)).collect();
        let got = disseminate_along(cluster, &tree, "matching:status", &routing, &status)?;
        let residual: Vec<Vec<WEdge>> = shards
            .iter()
            .zip(&got)
            .map(|(es, st)| es.iter().filter(|e| !st.contains_key(&e.u) && !st.contains_key(&e.v)).copied().collect())
            .collect();
        let counts = residual.iter().map(|r| Some(r.len() as u64)).collect();
        let count = global_reduce(cluster, &tree, "matching:residual", counts, &|a, b| *a += b)?.unwrap_or(0) as usize;
        report.residual.push(count);
        let ok = count <= 2 * n;
        broadcast(cluster, &tree, "matching:go", &ok)?;
        if !ok {
            if attempt == 1 {
                return Err(Error::RunFailed(format!("{count} residual edges exceed 2n = {} twice", 2 * n)));
            }
            // keep the schedule: the shipping round is idle
            cluster.exchange("matching:ship", Outbox::new(), &[])?;
            report.post_rounds += cluster.rounds_used() - post;
            continue;
        }
        let residual = ship_to_large(cluster, "matching:ship", &residual)?;
        let m3 = mate.greedy(&residual);
        report.m1 = m1.len();
        report.m2 = p2.edges.len();
        report.m3 = m3.len();
        report.post_rounds += cluster.rounds_used() - post;

        let by_pair: BTreeMap<(u64, u64), WEdge> = edges.iter().map(|e| ((e.u, e.v), *e)).collect();
        let mut matching: Vec<WEdge> = m1
            .into_iter()
            .chain(p2.edges)
            .chain(m3)
            .map(|e| {
                let e = e.normalized();
                by_pair.get(&(e.u, e.v)).copied().unwrap_or(e)
            })
            .collect();
        matching.sort();
        return Ok(MatchingOutcome { matching, report });
    }
    unreachable!("the second attempt returns or fails")
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SuperlinearOptions {
    /// stop once |E| ≤ c·n^{1+f}
    pub c: f64,
}

impl Default for SuperlinearOptions {
    fn default() -> Self {
        SuperlinearOptions { c: 4.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuperlinearLevel {
    pub depth: usize,
    pub edges: usize,
    /// edges with both endpoints free after the deeper levels; absent at the bottom
    pub leftover: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuperlinearOutcome {
    pub matching: Vec<WEdge>,
    pub depth: usize,
    pub attempts: usize,
    pub levels: Vec<SuperlinearLevel>,
}

/// Maximal matching with a large machine of n^{1+f} memory: sample edges with
/// p = n^{−f} until they fit, match the sample, then finish with the edges
/// the sample's matching leaves free, level by level.
pub fn matching_superlinear(
    cluster: &mut Cluster,
    graph: &SimGraph,
    placement: Placement,
    opts: SuperlinearOptions,
) -> Result<SuperlinearOutcome> {
    let f = cluster
        .config()
        .f()
        .ok_or_else(|| Error::Precondition("the superlinear matching needs f to be set".into()))?;
    if f <= 0.0 {
        return Err(Error::Precondition("f must be positive (p = 1 never shrinks the graph)".into()));
    }
    let n = graph.n;
    let tree = KeyTree::new(cluster);
    let edges: Vec<WEdge> = graph.edges.iter().map(WEdge::normalized).collect();
    let shards = distribute_edges(cluster, &edges, placement)?;
    let cap = (opts.c * (n as f64).powf(1.0 + f)).floor() as usize;
    let p = (n as f64).powf(-f);
    for attempt in 0..2 {
        let mut mate = Mate { partner: BTreeMap::new() };
        let mut levels = Vec::new();
        match filter_level(cluster, &tree, &shards, 1, cap, p, &mut mate, &mut levels) {
            Ok(()) => {
                let by_pair: BTreeMap<(u64, u64), WEdge> = edges.iter().map(|e| ((e.u, e.v), *e)).collect();
                let mut matching: Vec<WEdge> = mate
                    .partner
                    .iter()
                    .filter(|(u, v)| u < v)
                    .map(|(&u, &v)| by_pair.get(&(u, v)).copied().unwrap_or(WEdge::unweighted(u, v)))
                    .collect();
                matching.sort();
                levels.sort_by_key(|l| l.depth);
                let depth = levels.iter().map(|l| l.depth).max().unwrap_or(1);
                return Ok(SuperlinearOutcome { matching, depth, attempts: attempt + 1, levels });
            }
            Err(Error::RunFailed(_)) if attempt == 0 => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("the second attempt returns or fails")
}

#[allow(clippy::too_many_arguments)]
fn filter_level(
    cluster: &mut Cluster,
    tree: &KeyTree,
    shards: &[Vec<WEdge>],
    depth: usize,
    cap: usize,
    p: f64,
    mate: &mut Mate,
    levels: &mut Vec<SuperlinearLevel>,
) -> Result<()> {
    let label = format!("superlinear:{depth}");
    let counts = shards.iter().map(|s| Some(s.len() as u64)).collect();
    let count = global_reduce(cluster, tree, &format!("{label}:count"), counts, &|a, b| *a += b)?.unwrap_or(0) as usize;
    let fits = count <= cap;
    broadcast(cluster, tree, &format!("{label}:fits"), &fits)?;
    if fits {
        let es = ship_to_large(cluster, &format!("{label}:ship"), shards)?;
        mate.greedy(&es);
        levels.push(SuperlinearLevel { depth, edges: count, leftover: None });
        return Ok(());
    }

    let sampled: Vec<Vec<WEdge>> = shards
        .iter()
        .enumerate()
        .map(|(s, es)| {
            let mut rng = cluster.rng_for(MachineId::of_shard(s));
            es.iter().filter(|_| rng.random_bool(p)).copied().collect()
        })
        .collect();
    filter_level(cluster, tree, &sampled, depth + 1, cap, p, mate, levels)?;
    cluster.set_resident(MachineId::Large, 2 * mate.partner.len());

    // E_M: edges with both endpoints still free
    let status: BTreeMap<u64, u64> = mate.partner.keys().map(|&v| (v, 1)).collect();
    let holders: Vec<BTreeSet<u64>> = shards.iter().map(|es| es.iter().flat_map(|e| [e.u, e.v]).collect()).collect();
    let got = disseminate(cluster, tree, &format!("{label}:status"), &status, &holders)?;
    let free: Vec<Vec<WEdge>> = shards
        .iter()
        .zip(&got)
        .map(|(es, st)| es.iter().filter(|e| !st.contains_key(&e.u) && !st.contains_key(&e.v)).copied().collect())
        .collect();
    let counts = free.iter().map(|s| Some(s.len() as u64)).collect();
    let left = global_reduce(cluster, tree, &format!("{label}:left"), counts, &|a, b| *a += b)?.unwrap_or(0) as usize;
    let ok = left <= cap;
    broadcast(cluster, tree, &format!("{label}:go"), &ok)?;
    if !ok {
        return Err(Error::RunFailed(format!("{left} free edges at depth {depth} exceed {cap}")));
    }
    let es = ship_to_large(cluster, &format!("{label}:ship"), &free)?;
    mate.greedy(&es);
    levels.push(SuperlinearLevel { depth, edges: count, leftover: Some(left) });
    Ok(())
}
