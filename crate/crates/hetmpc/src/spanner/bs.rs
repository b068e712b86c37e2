//! Baswana-Sen clustering where the large machine decides the clusters from
//! sub-sampled neighbourhoods and the small machines add the removal edges.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::Rng;
use serde::Serialize;

use super::AEdge;
use crate::primitives::tree::reduce_up_keeping;
use crate::primitives::{broadcast, disseminate, global_reduce, KeyTree};
use crate::simcore::{Cluster, MachineId, Outbox, Record, SimError};
use crate::{Error, Result};

/// Rounds taken by [`modified_baswana_sen`] for tree depth `d`.
pub fn bs_rounds(depth: usize) -> usize {
    5 * depth + 5
}

/// Cluster history of the run. `history[v][i]` is c_i(v); the list stops at
/// the first level where v has no cluster, i.e. v is removed at step `len`.
#[derive(Debug, Clone, Serialize)]
pub struct BsState {
    pub k: usize,
    /// C_0 ⊇ C_1 ⊇ … ⊇ C_k = ∅
    pub centers: Vec<Vec<u64>>,
    pub history: BTreeMap<u64, Vec<u64>>,
    /// sampled edges per subgraph G_1..G_{k-1}
    pub sampled: Vec<usize>,
}

impl BsState {
    /// c_i(v), `None` for ⊥.
    pub fn center(&self, v: u64, i: usize) -> Option<u64> {
        self.history.get(&v).and_then(|h| h.get(i)).copied()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BsOutcome {
    /// spanner edges of A, sorted and without repeats
    pub edges: Vec<AEdge>,
    pub recluster_edges: usize,
    pub removal_edges: usize,
    pub state: BsState,
}

/// Lines up to the removal loop: cluster every vertex level by level, looking
/// for live clusters only through the sampled neighbourhoods. Returns the
/// history and the re-clustering edges.
fn cluster_levels<R: Rng>(
    vertices: &[u64],
    samples: &[Vec<AEdge>],
    k: usize,
    rng: &mut R,
) -> (BsState, Vec<AEdge>) {
    let prob = (vertices.len().max(1) as f64).powf(-1.0 / k as f64);
    let mut history: BTreeMap<u64, Vec<u64>> = vertices.iter().map(|&v| (v, vec![v])).collect();
    let mut centers: Vec<Vec<u64>> = vec![vertices.to_vec()];
    let mut added = Vec::new();
    for i in 1..=k {
        let live: BTreeSet<u64> = if i == k {
            BTreeSet::new()
        } else {
            centers[i - 1].iter().copied().filter(|_| rng.random_bool(prob)).collect()
        };
        // neighbours in G_i, smallest first
        let mut nbr: HashMap<u64, Vec<(u64, AEdge)>> = HashMap::new();
        if i < k {
            for e in &samples[i - 1] {
                nbr.entry(e.a).or_default().push((e.b, *e));
                nbr.entry(e.b).or_default().push((e.a, *e));
            }
            for l in nbr.values_mut() {
                l.sort();
            }
        }
        let prev: HashMap<u64, u64> =
            history.iter().filter(|(_, h)| h.len() == i).map(|(&v, h)| (v, h[i - 1])).collect();
        let mut next: Vec<(u64, u64)> = Vec::new();
        for (&v, &c) in &prev {
            if live.contains(&c) {
                next.push((v, c));
                continue;
            }
            let found = nbr.get(&v).and_then(|l| {
                l.iter().find(|(u, _)| prev.get(u).is_some_and(|cu| live.contains(cu)))
            });
            if let Some((u, e)) = found {
                next.push((v, prev[u]));
                added.push(*e);
            }
        }
        for (v, c) in next {
            history.get_mut(&v).expect("known vertex").push(c);
        }
        centers.push(live.into_iter().collect());
    }
    let sampled = samples.iter().map(Vec::len).collect();
    (BsState { k, centers, history, sampled }, added)
}

/// (2k−1)-spanner of A = (`vertices`, edges in `shards`). The small machines
/// sample G_1..G_{k−1} with probability `p` and ship them; the large machine
/// clusters; every small machine holding an edge of v learns v's history and
/// one edge per (removed vertex, adjacent cluster) is kept, the one to the
/// smallest neighbour. `bs_rounds(depth)` rounds.
pub fn modified_baswana_sen(
    cluster: &mut Cluster,
    tree: &KeyTree,
    vertices: &[u64],
    shards: &[Vec<AEdge>],
    k: usize,
    p: f64,
) -> Result<BsOutcome> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let label = "bs";
    let nk = cluster.small_count();
    // G_k is never consulted since C_k is empty
    let picks: Vec<Vec<(u64, AEdge)>> = (0..nk)
        .map(|s| {
            let mut rng = cluster.rng_for(MachineId::of_shard(s));
            let es = shards.get(s).map(Vec::as_slice).unwrap_or(&[]);
            let mut out = Vec::new();
            for j in 1..k {
                out.extend(es.iter().filter(|_| p >= 1.0 || rng.random_bool(p.max(0.0))).map(|e| (j as u64, *e)));
            }
            out
        })
        .collect();
    let counts = picks.iter().map(|x| Some(x.len() as u64)).collect();
    let total = global_reduce(cluster, tree, &format!("{label}:count"), counts, &|a, b| *a += b)?.unwrap_or(0) as usize;
    let room = cluster.large_budget().saturating_sub(cluster.resident(MachineId::Large));
    let need = total * <(u64, AEdge)>::words(&(0, AEdge::default()));
    broadcast(cluster, tree, &format!("{label}:go"), &(need <= room))?;
    if need > room {
        return Err(SimError::Capacity { what: "sampled subgraphs".into(), needed: need, available: room }.into());
    }
    let mut out = Outbox::new();
    for (s, es) in picks.iter().enumerate() {
        for e in es {
            out.push(MachineId::of_shard(s), MachineId::Large, e);
        }
    }
    let inboxes = cluster.exchange(&format!("{label}:samples"), out, &[])?;
    let mut samples: Vec<Vec<AEdge>> = vec![Vec::new(); k.saturating_sub(1)];
    for msg in &inboxes[0] {
        for (j, e) in msg.decode::<(u64, AEdge)>()? {
            samples[j as usize - 1].push(e);
        }
    }
    for s in &mut samples {
        s.sort();
    }

    let mut rng = cluster.rng_for(MachineId::Large);
    let (state, recluster) = cluster_levels(vertices, &samples, k, &mut rng);

    let holders: Vec<BTreeSet<u64>> = (0..nk)
        .map(|s| shards.get(s).map_or_else(BTreeSet::new, |es| es.iter().flat_map(|e| [e.a, e.b]).collect()))
        .collect();
    let got = disseminate(cluster, tree, &format!("{label}:history"), &state.history, &holders)?;

    // candidates (v, c) -> (u, witness) for v removed at step i and c = c_{i-1}(u)
    let leaves: Vec<BTreeMap<(u64, u64), AEdge>> = (0..nk)
        .map(|s| {
            let mut m: BTreeMap<(u64, u64), AEdge> = BTreeMap::new();
            let es = shards.get(s).map(Vec::as_slice).unwrap_or(&[]);
            for e in es {
                for (v, u) in [(e.a, e.b), (e.b, e.a)] {
                    let (Some(hv), Some(hu)) = (got[s].get(&v), got[s].get(&u)) else { continue };
                    let i = hv.len();
                    if i == 0 || hu.len() < i {
                        continue;
                    }
                    let cand = AEdge { a: v, b: u, ..*e };
                    m.entry((v, hu[i - 1])).and_modify(|x| *x = (*x).min(cand)).or_insert(cand);
                }
            }
            m
        })
        .collect();
    let smaller = |x: &mut AEdge, y: AEdge| *x = (*x).min(y);
    let (roots, _) = reduce_up_keeping(cluster, tree, &format!("{label}:removal"), leaves, &smaller, &|_| ())?;
    let removal: Vec<AEdge> = roots.into_iter().flat_map(|m| m.into_values()).collect();

    let removal_edges = removal.len();
    let recluster_edges = recluster.len();
    let mut edges: Vec<AEdge> = recluster.into_iter().chain(removal).map(|e| e.normalized()).collect();
    edges.sort();
    edges.dedup();
    Ok(BsOutcome { edges, recluster_edges, removal_edges, state })
}

/// Greedy (2k−1)-spanner: keep an edge iff its endpoints are more than 2k−1
/// hops apart in the edges kept so far. Edges are taken in sorted order.
pub fn greedy_spanner(edges: &[AEdge], k: usize) -> Vec<AEdge> {
    let limit = 2 * k.max(1) - 1;
    let mut es: Vec<AEdge> = edges.iter().map(AEdge::normalized).collect();
    es.sort();
    let mut adj: HashMap<u64, Vec<u64>> = HashMap::new();
    let mut kept = Vec::new();
    for e in es {
        if within(&adj, e.a, e.b, limit) {
            continue;
        }
        adj.entry(e.a).or_default().push(e.b);
        adj.entry(e.b).or_default().push(e.a);
        kept.push(e);
    }
    kept
}

fn within(adj: &HashMap<u64, Vec<u64>>, s: u64, t: u64, limit: usize) -> bool {
    if s == t {
        return true;
    }
    let mut dist: HashMap<u64, usize> = HashMap::from([(s, 0)]);
    let mut q = VecDeque::from([s]);
    while let Some(x) = q.pop_front() {
        let d = dist[&x];
        if d == limit {
            continue;
        }
        for &y in adj.get(&x).map(Vec::as_slice).unwrap_or(&[]) {
            if !dist.contains_key(&y) {
                if y == t {
                    return true;
                }
                dist.insert(y, d + 1);
                q.push_back(y);
            }
        }
    }
    false
}
