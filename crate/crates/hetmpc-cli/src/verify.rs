//! Sequential oracles behind `--verify`.

use std::collections::{BTreeSet, VecDeque};

use hetmpc::graph::{SimGraph, WEdge};

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let r = self.find(self.0[x]);
            self.0[x] = r;
        }
        self.0[x]
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        self.0[a.max(b)] = a.min(b);
        true
    }
}

/// Minimum spanning forest under the (w, lo, hi) order.
pub fn kruskal(g: &SimGraph) -> Vec<WEdge> {
    let mut es: Vec<WEdge> = g.edges.iter().map(WEdge::normalized).collect();
    es.sort();
    let mut d = Dsu::new(g.n);
    es.into_iter().filter(|e| d.union(e.u as usize, e.v as usize)).collect()
}

pub fn edge_keys(es: &[WEdge]) -> BTreeSet<(u64, u64, u64)> {
    es.iter().map(|e| (e.lo(), e.hi(), e.w)).collect()
}

/// Smallest vertex of each vertex's component.
pub fn component_labels(g: &SimGraph) -> Vec<u64> {
    let mut d = Dsu::new(g.n);
    for e in &g.edges {
        d.union(e.u as usize, e.v as usize);
    }
    // union keeps the smaller root, so the root is the smallest member
    (0..g.n).map(|v| d.find(v) as u64).collect()
}

fn hops(adj: &[Vec<u64>], s: usize) -> Vec<usize> {
    let mut d = vec![usize::MAX; adj.len()];
    d[s] = 0;
    let mut q = VecDeque::from([s]);
    while let Some(x) = q.pop_front() {
        for &y in &adj[x] {
            if d[y as usize] == usize::MAX {
                d[y as usize] = d[x] + 1;
                q.push_back(y as usize);
            }
        }
    }
    d
}

/// Largest d_H(u,v) / d_G(u,v) over connected pairs (hop distances), or
/// `None` if H disconnects a pair that G connects.
pub fn all_pairs_stretch(g: &SimGraph, h: &[WEdge]) -> Option<f64> {
    let ga = g.adjacency();
    let mut ha = vec![Vec::new(); g.n];
    for e in h {
        ha[e.u as usize].push(e.v);
        ha[e.v as usize].push(e.u);
    }
    let mut worst: f64 = 1.0;
    for s in 0..g.n {
        let (dg, dh) = (hops(&ga, s), hops(&ha, s));
        for t in 0..g.n {
            if t == s || dg[t] == usize::MAX {
                continue;
            }
            if dh[t] == usize::MAX {
                return None;
            }
            worst = worst.max(dh[t] as f64 / dg[t] as f64);
        }
    }
    Some(worst)
}

/// Every matched edge is in the graph and no two share a vertex.
pub fn is_matching(g: &SimGraph, m: &[WEdge]) -> bool {
    let edges: BTreeSet<(u64, u64)> = g.edges.iter().map(|e| (e.lo(), e.hi())).collect();
    let mut used = BTreeSet::new();
    m.iter().all(|e| edges.contains(&(e.lo(), e.hi())) && used.insert(e.u) && used.insert(e.v))
}

/// Edges with both endpoints unmatched; zero iff the matching is maximal.
pub fn free_edges(g: &SimGraph, m: &[WEdge]) -> usize {
    let used: BTreeSet<u64> = m.iter().flat_map(|e| [e.u, e.v]).collect();
    g.edges.iter().filter(|e| !used.contains(&e.u) && !used.contains(&e.v)).count()
}
