//! Connected components from linear sketches, and MST weight estimation by
//! counting the components of threshold subgraphs.
//!
//! The small machines sketch the incidence vectors of the vertices they see,
//! the sketches are summed up the aggregation trees, and the large machine
//! runs Borůvka on sums of sketches without ever seeing the edges.

pub mod sketch;

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

pub use sketch::{coordinate, L0Sketch, Sample, SketchKeys, SketchParams, Term};

use sketch::{mul_mod, pow_mod, push_terms, Cell};

use crate::graph::{SimGraph, WEdge};
use crate::primitives::{aggregate, broadcast, global_reduce, KeyTree};
use crate::simcore::{distribute_edges, Cluster, MachineId, Placement};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct CcOptions {
    /// instances per ⌈log₂n⌉
    pub c1: usize,
    /// one-sparse cells per level
    pub buckets: usize,
    /// runs with fresh keys before giving up
    pub attempts: usize,
}

impl Default for CcOptions {
    fn default() -> Self {
        CcOptions { c1: 3, buckets: 4, attempts: 2 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CcOutcome {
    /// smallest vertex of each vertex's component
    pub labels: Vec<u64>,
    pub components: usize,
    /// Borůvka phases of the successful attempt
    pub phases: usize,
    pub attempts: usize,
    /// samples that failed or decoded an edge outside the cut, all attempts
    pub sampler_failures: usize,
    /// words of all vertex sketches at the large machine, last attempt
    pub sketch_words: usize,
    pub params: SketchParams,
}

/// Rounds of one sketching attempt for tree depth `d`: key broadcast, then aggregation.
pub fn cc_rounds(depth: usize) -> usize {
    2 * depth + 2
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut x = x;
        while self.0[x] != r {
            let next = self.0[x];
            self.0[x] = r;
            x = next;
        }
        r
    }
}

/// Partial sketches of every vertex touched by `edges`.
pub fn partial_sketches(keys: &SketchKeys, edges: &[WEdge]) -> BTreeMap<u64, L0Sketch> {
    let n = keys.n as u64;
    let zn: Vec<u64> = keys.z.iter().map(|&z| pow_mod(z, n)).collect();
    // z^(a·n + b) = (zⁿ)^a · z^b, from powers cached per vertex
    let mut lo_pow: HashMap<u64, Vec<u64>> = HashMap::new();
    let mut hi_pow: HashMap<u64, Vec<u64>> = HashMap::new();
    let mut m: BTreeMap<u64, Vec<(u32, Cell)>> = BTreeMap::new();
    for e in edges {
        let (a, b) = (e.lo(), e.hi());
        let pa = lo_pow.entry(a).or_insert_with(|| zn.iter().map(|&x| pow_mod(x, a)).collect());
        let pa = pa.clone();
        let pb = hi_pow.entry(b).or_insert_with(|| keys.z.iter().map(|&x| pow_mod(x, b)).collect());
        let idx = coordinate(keys.n, a, b);
        let terms = keys.terms(idx, |r| mul_mod(pa[r], pb[r]));
        push_terms(m.entry(a).or_default(), keys, idx, &terms, true);
        push_terms(m.entry(b).or_default(), keys, idx, &terms, false);
    }
    m.into_iter().map(|(v, cells)| (v, L0Sketch::from_cells(cells))).filter(|(_, s)| !s.is_zero()).collect()
}

enum Boruvka {
    Done { labels: Vec<u64>, phases: usize, failures: usize },
    Stuck { failures: usize },
}

/// Borůvka over sketch sums, one fresh instance per phase.
fn sketch_boruvka(n: usize, keys: &SketchKeys, sketches: BTreeMap<u64, L0Sketch>) -> Boruvka {
    let mut dsu = Dsu((0..n).collect());
    let mut sums: BTreeMap<usize, L0Sketch> = sketches.into_iter().map(|(v, s)| (v as usize, s)).collect();
    let mut failures = 0;
    let mut phases = 0;
    for r in 0..keys.params.instances {
        // a zero sum means the supernode has no cut edge left
        sums.retain(|_, s| !s.is_zero());
        if sums.is_empty() {
            break;
        }
        phases += 1;
        let mut picks = Vec::new();
        for (&root, s) in &sums {
            match s.sample(keys, r) {
                Sample::Edge(a, b) => {
                    let (ra, rb) = (dsu.find(a as usize), dsu.find(b as usize));
                    if (ra == root) != (rb == root) {
                        picks.push((ra, rb));
                    } else {
                        failures += 1;
                    }
                }
                Sample::Empty | Sample::Fail => failures += 1,
            }
        }
        for (a, b) in picks {
            let (ra, rb) = (dsu.find(a), dsu.find(b));
            if ra == rb {
                continue;
            }
            let (keep, gone) = (ra.min(rb), ra.max(rb));
            dsu.0[gone] = keep;
            if let Some(s) = sums.remove(&gone) {
                sums.entry(keep).or_default().add(&s);
            }
        }
    }
    sums.retain(|_, s| !s.is_zero());
    if !sums.is_empty() {
        return Boruvka::Stuck { failures };
    }
    let mut smallest = vec![u64::MAX; n];
    for v in 0..n {
        let r = dsu.find(v);
        smallest[r] = smallest[r].min(v as u64);
    }
    let labels = (0..n).map(|v| smallest[dsu.find(v)]).collect();
    Boruvka::Done { labels, phases, failures }
}

/// Connected components of the graph whose edges sit in `shards`.
pub fn components_of_shards(
    cluster: &mut Cluster,
    tree: &KeyTree,
    n: usize,
    shards: &[Vec<WEdge>],
    opts: &CcOptions,
) -> Result<CcOutcome> {
    let params = SketchParams::for_n(n, opts.c1.max(1), opts.buckets);
    if params.instances < crate::simcore::ceil_log2(n) {
        return Err(Error::Precondition(format!("{} sampler instances cannot cover the Borůvka phases", params.instances)));
    }
    let mut failures = 0;
    for attempt in 1..=opts.attempts.max(1) {
        let keys = {
            let mut rng = cluster.rng_for(MachineId::Large);
            SketchKeys::generate(n, params, &mut rng)
        };
        let copies = broadcast(cluster, tree, "cc:keys", &keys)?;
        let leaves: Vec<BTreeMap<u64, L0Sketch>> =
            (0..cluster.small_count()).map(|s| partial_sketches(&copies[s], shards.get(s).map_or(&[], Vec::as_slice))).collect();
        let (sketches, _) = aggregate(cluster, tree, "cc:sketch", leaves, |a: &mut L0Sketch, b| a.add(&b))?;
        let sketch_words = sketches.values().map(|s| 1 + crate::simcore::Record::words(s)).sum();
        match sketch_boruvka(n, &keys, sketches) {
            Boruvka::Done { labels, phases, failures: f } => {
                failures += f;
                let mut reps = labels.clone();
                reps.sort_unstable();
                reps.dedup();
                return Ok(CcOutcome {
                    labels,
                    components: reps.len(),
                    phases,
                    attempts: attempt,
                    sampler_failures: failures,
                    sketch_words,
                    params,
                });
            }
            Boruvka::Stuck { failures: f } => failures += f,
        }
    }
    Err(Error::RunFailed(format!(
        "sketch Borůvka ran out of sampler instances in {} attempts",
        opts.attempts.max(1)
    )))
}

/// Connected components; each vertex is labelled with the smallest vertex of its component.
pub fn connected_components(
    cluster: &mut Cluster,
    graph: &SimGraph,
    placement: Placement,
    opts: &CcOptions,
) -> Result<CcOutcome> {
    let tree = KeyTree::new(cluster);
    let edges: Vec<WEdge> = graph.edges.iter().map(WEdge::normalized).collect();
    let shards = distribute_edges(cluster, &edges, placement)?;
    components_of_shards(cluster, &tree, graph.n, &shards, opts)
}

/// Thresholds (1+ε)^i, i = 0..=r, with r the first exponent reaching `w_max`.
pub fn thresholds(eps: f64, w_max: u64) -> Vec<f64> {
    let mut t = vec![1.0];
    while *t.last().unwrap() < w_max as f64 {
        let next = t.last().unwrap() * (1.0 + eps);
        t.push(next);
    }
    t
}

/// ŵ = (n − c) + Σ_{i<r} ε(1+ε)^i·(cc_i − c), with c = cc_r.
///
/// The MST weight is (n − c) + ∫₁^∞ (cc(G_{≤t}) − c) dt; this is its left
/// Riemann sum over the thresholds, so w* ≤ ŵ ≤ (1+ε)·w*.
pub fn threshold_estimate(n: usize, eps: f64, cc: &[usize]) -> f64 {
    let c = *cc.last().unwrap_or(&n) as f64;
    let mut est = n as f64 - c;
    let mut t = 1.0;
    for &ci in &cc[..cc.len().saturating_sub(1)] {
        est += eps * t * (ci as f64 - c);
        t *= 1.0 + eps;
    }
    est
}

#[derive(Debug, Clone, Serialize)]
pub struct MstEstimate {
    pub estimate: f64,
    pub eps: f64,
    pub w_max: u64,
    pub thresholds: Vec<f64>,
    /// components of each threshold subgraph
    pub cc: Vec<usize>,
    pub attempts: usize,
}

/// Rounds of the estimator for tree depth `d`: the max-weight reduction,
/// then the threshold lanes side by side.
pub fn estimate_rounds(depth: usize) -> usize {
    depth + 1 + cc_rounds(depth)
}

/// (1+ε)-estimate of the minimum spanning forest weight.
pub fn mst_weight_estimate(
    cluster: &mut Cluster,
    graph: &SimGraph,
    eps: f64,
    placement: Placement,
    opts: &CcOptions,
) -> Result<MstEstimate> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Precondition(format!("eps must lie in (0, 1], got {eps}")));
    }
    let n = graph.n;
    let tree = KeyTree::new(cluster);
    let edges: Vec<WEdge> = graph.edges.iter().map(WEdge::normalized).collect();
    let shards = distribute_edges(cluster, &edges, placement)?;
    let local: Vec<Option<u64>> = (0..cluster.small_count())
        .map(|s| shards.get(s).and_then(|es| es.iter().map(|e| e.w).max()))
        .collect();
    let w_max = global_reduce(cluster, &tree, "estimate:wmax", local, &|a: &mut u64, b| *a = (*a).max(b))?.unwrap_or(1);
    let ts = thresholds(eps, w_max);

    let mut lanes = Vec::new();
    let mut cc = Vec::new();
    let mut attempts = 0;
    let mut failure = None;
    for (i, &t) in ts.iter().enumerate() {
        let mut lane = cluster.fork(i);
        let sub: Vec<Vec<WEdge>> =
            shards.iter().map(|es| es.iter().filter(|e| e.w as f64 <= t).copied().collect()).collect();
        match components_of_shards(&mut lane, &tree, n, &sub, opts) {
            Ok(out) => {
                cc.push(out.components);
                attempts = attempts.max(out.attempts);
            }
            Err(e) => failure = Some(e),
        }
        lanes.push(lane);
        if failure.is_some() {
            break;
        }
    }
    cluster.join(lanes)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(MstEstimate { estimate: threshold_estimate(n, eps, &cc), eps, w_max, thresholds: ts, cc, attempts })
}
