//! Maximal matching on the small machines alone, for graphs of low degree.

use std::collections::BTreeMap;

use rand::Rng;

use crate::graph::WEdge;
use crate::primitives::{allreduce, KeyTree};
use crate::simcore::{ceil_log2, Cluster, MachineId};
use crate::{Error, Result};

/// Result of a low-degree matcher: the matched edges, left on the machines
/// that hold them.
#[derive(Debug, Clone)]
pub struct LowDegreeMatch {
    pub matched: Vec<Vec<WEdge>>,
    pub iterations: usize,
}

/// A maximal-matching procedure that runs on the small machines only and
/// stays within their budgets. `shards[s]` holds the edges of machine `s`.
pub trait LowDegreeMatcher {
    fn name(&self) -> &'static str;
    fn run(&self, cluster: &mut Cluster, tree: &KeyTree, shards: &[Vec<WEdge>]) -> Result<LowDegreeMatch>;
}

/// Round-synchronous randomized greedy. Every iteration each live edge draws
/// a rank, and an edge joins when it has the smallest rank at both of its
/// endpoints; edges touching a matched vertex die. Each iteration is two
/// all-reduces, so `4·depth` rounds, plus `2·depth` for the final check.
#[derive(Debug, Clone, Copy, Default)]
pub struct RankedProposals {
    /// iterations before giving up; `None` for 8·⌈log₂(m+2)⌉ + 8
    pub max_iterations: Option<usize>,
}

/// key under which machines learn whether any live edge is left
const ANY_LIVE: u64 = u64::MAX;

impl LowDegreeMatcher for RankedProposals {
    fn name(&self) -> &'static str {
        "ranked-proposals"
    }

    fn run(&self, cluster: &mut Cluster, tree: &KeyTree, shards: &[Vec<WEdge>]) -> Result<LowDegreeMatch> {
        let nk = cluster.small_count();
        let mut live: Vec<Vec<WEdge>> = (0..nk).map(|s| shards.get(s).cloned().unwrap_or_default()).collect();
        let total: usize = live.iter().map(Vec::len).sum();
        let cap = self.max_iterations.unwrap_or(8 * ceil_log2(total + 2) + 8);
        let mut matched: Vec<Vec<WEdge>> = vec![Vec::new(); nk];
        let mut iterations = 0;
        loop {
            // proposals: (rank, lo, hi) minimum per vertex, and whether anything is live
            let ranked: Vec<Vec<(u64, WEdge)>> = live
                .iter()
                .enumerate()
                .map(|(s, es)| {
                    let mut rng = cluster.rng_for(MachineId::of_shard(s));
                    es.iter().map(|e| (rng.random::<u64>(), *e)).collect()
                })
                .collect();
            let leaves: Vec<BTreeMap<u64, (u64, u64, u64)>> = ranked
                .iter()
                .map(|es| {
                    let mut m = BTreeMap::from([(ANY_LIVE, (u64::from(es.is_empty()), 0, 0))]);
                    for &(r, e) in es {
                        let cand = (r, e.lo(), e.hi());
                        for x in [e.u, e.v] {
                            m.entry(x).and_modify(|c: &mut (u64, u64, u64)| *c = (*c).min(cand)).or_insert(cand);
                        }
                    }
                    m
                })
                .collect();
            let best = allreduce(cluster, tree, "phase1:propose", leaves, |a, b| *a = (*a).min(b))?;
            if best.iter().all(|m| m.get(&ANY_LIVE).is_none_or(|v| v.0 == 1)) {
                break;
            }
            if iterations == cap {
                return Err(Error::RunFailed(format!("low-degree matching still running after {cap} iterations")));
            }
            iterations += 1;

            // joins, then every holder learns which of its vertices got matched
            let mut flags: Vec<BTreeMap<u64, u64>> = Vec::with_capacity(nk);
            for (s, es) in ranked.iter().enumerate() {
                let mut m = BTreeMap::new();
                for &(r, e) in es {
                    let cand = (r, e.lo(), e.hi());
                    let joins = best[s].get(&e.u) == Some(&cand) && best[s].get(&e.v) == Some(&cand);
                    if joins {
                        matched[s].push(e);
                    }
                    for x in [e.u, e.v] {
                        *m.entry(x).or_insert(0) |= u64::from(joins);
                    }
                }
                flags.push(m);
            }
            let flags = allreduce(cluster, tree, "phase1:matched", flags, |a, b| *a |= b)?;
            for (s, es) in live.iter_mut().enumerate() {
                es.retain(|e| flags[s].get(&e.u) == Some(&0) && flags[s].get(&e.v) == Some(&0));
            }
        }
        Ok(LowDegreeMatch { matched, iterations })
    }
}
