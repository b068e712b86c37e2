//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};

use hetmpc::graph::{SimGraph, WEdge};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Simple random graph with exactly `m` distinct edges and weights in `1..=max_w`.
pub fn gnm(n: usize, m: usize, max_w: u64, seed: u64) -> SimGraph {
    assert!(m <= n * (n - 1) / 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let u = rng.random_range(0..n as u64);
        let v = rng.random_range(0..n as u64);
        if u == v || !seen.insert((u.min(v), u.max(v))) {
            continue;
        }
        edges.push(WEdge::new(u, v, rng.random_range(1..=max_w)));
    }
    SimGraph::new(n, edges).unwrap()
}

pub struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut x = x;
        while self.parent[x] != r {
            let next = self.parent[x];
            self.parent[x] = r;
            x = next;
        }
        r
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        let (a, b) = if self.size[a] < self.size[b] { (b, a) } else { (a, b) };
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Kruskal under the `(w, min, max)` edge order.
pub fn kruskal(g: &SimGraph) -> Vec<WEdge> {
    let mut es: Vec<WEdge> = g.edges.iter().map(WEdge::normalized).collect();
    es.sort();
    let mut dsu = Dsu::new(g.n);
    es.into_iter().filter(|e| dsu.union(e.u as usize, e.v as usize)).collect()
}

pub fn forest_weight(es: &[WEdge]) -> u64 {
    es.iter().map(|e| e.w).sum()
}

pub fn edge_set(es: &[WEdge]) -> BTreeSet<(u64, u64, u64)> {
    es.iter().map(|e| (e.lo(), e.hi(), e.w)).collect()
}

/// Component label per vertex (smallest vertex of the component), by BFS.
pub fn components(g: &SimGraph) -> Vec<u64> {
    let adj = g.adjacency();
    let mut label = vec![u64::MAX; g.n];
    for s in 0..g.n {
        if label[s] != u64::MAX {
            continue;
        }
        label[s] = s as u64;
        let mut q = VecDeque::from([s]);
        while let Some(x) = q.pop_front() {
            for &y in &adj[x] {
                if label[y as usize] == u64::MAX {
                    label[y as usize] = s as u64;
                    q.push_back(y as usize);
                }
            }
        }
    }
    label
}

pub fn component_count(g: &SimGraph) -> usize {
    let c = components(g);
    c.iter().enumerate().filter(|&(i, &l)| i as u64 == l).count()
}

/// Hop distances from `s` in an adjacency list, `usize::MAX` if unreachable.
pub fn bfs(adj: &[Vec<u64>], s: usize) -> Vec<usize> {
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

pub fn degree_oracle(g: &SimGraph) -> Vec<u64> {
    let mut d = vec![0u64; g.n];
    for e in &g.edges {
        d[e.u as usize] += 1;
        d[e.v as usize] += 1;
    }
    d
}

/// Like [`gnm`] but the weights are a random permutation of `1..=m`.
pub fn gnm_unique(n: usize, m: usize, seed: u64) -> SimGraph {
    use rand::seq::SliceRandom;
    let g = gnm(n, m, 1, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let mut ws: Vec<u64> = (1..=m as u64).collect();
    ws.shuffle(&mut rng);
    let edges = g.edges.iter().zip(ws).map(|(e, w)| WEdge::new(e.u, e.v, w)).collect();
    SimGraph::new(n, edges).unwrap()
}

/// Random labelled tree: vertex i attaches to a random earlier vertex.
pub fn random_tree(n: usize, max_w: u64, seed: u64) -> Vec<(u64, u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..n as u64).map(|v| (rng.random_range(0..v), v, rng.random_range(1..=max_w))).collect()
}

/// Edges of `g` that are F-light for the forest `f`: the edge closes no cycle
/// in `f`, or is no heavier than the heaviest forest edge on the cycle.
pub fn f_light(g: &SimGraph, f: &[WEdge]) -> BTreeSet<(u64, u64, u64)> {
    let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); g.n];
    for e in f {
        adj[e.u as usize].push((e.v as usize, e.w));
        adj[e.v as usize].push((e.u as usize, e.w));
    }
    let mut out = BTreeSet::new();
    for e in &g.edges {
        // heaviest edge on the forest path, by walking from u
        let mut best = vec![None; g.n];
        best[e.u as usize] = Some(0u64);
        let mut stack = vec![e.u as usize];
        while let Some(x) = stack.pop() {
            for &(y, w) in &adj[x] {
                if best[y].is_none() {
                    best[y] = Some(best[x].unwrap().max(w));
                    stack.push(y);
                }
            }
        }
        match best[e.v as usize] {
            Some(m) if e.w > m => {}
            _ => {
                out.insert((e.lo(), e.hi(), e.w));
            }
        }
    }
    out
}

/// G(n, p): every pair independently, unit weights.
pub fn gnp(n: usize, p: f64, seed: u64) -> SimGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n as u64 {
        for v in u + 1..n as u64 {
            if rng.random_bool(p) {
                edges.push(WEdge::unweighted(u, v));
            }
        }
    }
    SimGraph::new(n, edges).unwrap()
}

pub fn adjacency(n: usize, es: &[(u64, u64)]) -> Vec<Vec<u64>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in es {
        adj[u as usize].push(v);
        adj[v as usize].push(u);
    }
    adj
}

/// Largest dist_H(s, t) / dist_G(s, t) over all connected pairs, by BFS from
/// every vertex. `None` if H disconnects a pair that G connects.
pub fn all_pairs_stretch(n: usize, g: &[(u64, u64)], h: &[(u64, u64)]) -> Option<f64> {
    let (ag, ah) = (adjacency(n, g), adjacency(n, h));
    let mut worst: f64 = 1.0;
    for s in 0..n {
        let (dg, dh) = (bfs(&ag, s), bfs(&ah, s));
        for t in 0..n {
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

/// Largest dist_H(u, v) over the edges (u, v) of G, `None` if some edge is cut.
pub fn edge_stretch(n: usize, g: &[(u64, u64)], h: &[(u64, u64)]) -> Option<usize> {
    let ah = adjacency(n, h);
    let mut by_src: Vec<Vec<u64>> = vec![Vec::new(); n];
    for &(u, v) in g {
        by_src[u.min(v) as usize].push(u.max(v));
    }
    let mut worst = 0;
    for (s, ts) in by_src.iter().enumerate() {
        if ts.is_empty() {
            continue;
        }
        let d = bfs(&ah, s);
        for &t in ts {
            if d[t as usize] == usize::MAX {
                return None;
            }
            worst = worst.max(d[t as usize]);
        }
    }
    Some(worst)
}

pub fn pairs(es: &[WEdge]) -> Vec<(u64, u64)> {
    es.iter().map(|e| (e.lo(), e.hi())).collect()
}

/// No vertex in two edges of `m`, and every edge of `m` is an edge of `g`.
pub fn is_matching(g: &SimGraph, m: &[WEdge]) -> bool {
    let es: HashSet<(u64, u64)> = g.edges.iter().map(|e| (e.lo(), e.hi())).collect();
    let mut used = HashSet::new();
    m.iter().all(|e| es.contains(&(e.lo(), e.hi())) && e.u != e.v && used.insert(e.u) && used.insert(e.v))
}

/// Edges of `g` with both endpoints unmatched.
pub fn free_edges(g: &SimGraph, m: &[WEdge]) -> usize {
    let used: HashSet<u64> = m.iter().flat_map(|e| [e.u, e.v]).collect();
    g.edges.iter().filter(|e| !used.contains(&e.u) && !used.contains(&e.v)).count()
}

/// Component label per vertex (smallest vertex of the component), by union-find.
pub fn union_find_labels(g: &SimGraph) -> Vec<u64> {
    let mut d = Dsu::new(g.n);
    for e in &g.edges {
        d.union(e.u as usize, e.v as usize);
    }
    let mut smallest = vec![u64::MAX; g.n];
    for v in 0..g.n {
        let r = d.find(v);
        smallest[r] = smallest[r].min(v as u64);
    }
    (0..g.n).map(|v| smallest[d.find(v)]).collect()
}
