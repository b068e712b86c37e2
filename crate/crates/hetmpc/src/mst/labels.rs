//! Labels from which the heaviest edge on a forest path can be read off two labels.
//!
//! Built by centroid decomposition: a vertex records, for every centroid whose
//! piece contained it, the heaviest edge on its path to that centroid.

use std::collections::{BTreeMap, BTreeSet};

use crate::simcore::Record;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelEntry {
    pub separator: u64,
    pub level: u32,
    pub maxw: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowLabel {
    pub vertex: u64,
    pub entries: Vec<LabelEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathMax {
    MaxWeight(u64),
    DifferentComponents,
}

impl FlowLabel {
    /// Label of a vertex that is alone in its tree.
    pub fn singleton(v: u64) -> Self {
        FlowLabel { vertex: v, entries: vec![LabelEntry { separator: v, level: 0, maxw: 0 }] }
    }

    /// The top-level separator of the vertex's tree.
    pub fn component(&self) -> u64 {
        self.entries[0].separator
    }
}

const SEP_MASK: u64 = (1 << 32) - 1;
const LAST: u64 = 1 << 63;

/// Two words per entry: separator and level packed in the first, with the
/// high bit marking the last entry, and the path maximum in the second. The
/// vertex itself is implied by the key it travels under and is not sent.
impl Record for FlowLabel {
    fn words(&self) -> usize {
        2 * self.entries.len()
    }
    fn encode(&self, out: &mut Vec<u64>) {
        for (i, e) in self.entries.iter().enumerate() {
            let last = if i + 1 == self.entries.len() { LAST } else { 0 };
            out.push(e.separator | (e.level as u64) << 32 | last);
            out.push(e.maxw);
        }
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        let mut entries = Vec::new();
        loop {
            let (a, w) = <(u64, u64)>::decode(input)?;
            entries.push(LabelEntry {
                separator: a & SEP_MASK,
                level: ((a >> 32) & 0x7fff_ffff) as u32,
                maxw: w,
            });
            if a & LAST != 0 {
                break;
            }
        }
        let vertex = entries.last().map(|e| e.separator).unwrap_or(0);
        Some(FlowLabel { vertex, entries })
    }
}

/// Heaviest edge on the forest path between the two labelled vertices.
pub fn flow_label_decode(a: &FlowLabel, b: &FlowLabel) -> PathMax {
    if a.component() != b.component() {
        return PathMax::DifferentComponents;
    }
    let mut best = 0;
    for (x, y) in a.entries.iter().zip(&b.entries) {
        if x.separator != y.separator {
            break;
        }
        best = x.maxw.max(y.maxw);
    }
    PathMax::MaxWeight(best)
}

/// Labels every vertex touched by `forest` (edges `(u, v, w)`), plus the
/// extra `vertices` as singletons. Errors if the edges contain a cycle.
pub fn flow_label_marker(forest: &[(u64, u64, u64)], vertices: &[u64]) -> Result<BTreeMap<u64, FlowLabel>> {
    let mut adj: BTreeMap<u64, Vec<(u64, u64)>> = BTreeMap::new();
    for &v in vertices {
        adj.entry(v).or_default();
    }
    for &(u, v, w) in forest {
        adj.entry(u).or_default().push((v, w));
        adj.entry(v).or_default().push((u, w));
    }
    // acyclic iff each component has one edge fewer than vertices
    let ids: Vec<u64> = adj.keys().copied().collect();
    let index: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(u, v, _) in forest {
        let (a, b) = (find(&mut parent, index[&u]), find(&mut parent, index[&v]));
        if a == b {
            return Err(Error::Internal(format!("forest has a cycle through ({u}, {v})")));
        }
        parent[a] = b;
    }

    let mut labels: BTreeMap<u64, FlowLabel> =
        ids.iter().map(|&v| (v, FlowLabel { vertex: v, entries: Vec::new() })).collect();
    let mut removed: BTreeSet<u64> = BTreeSet::new();
    let mut stack: Vec<(u64, u32)> = Vec::new();
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    for &v in &ids {
        if !seen.contains(&v) {
            seen.extend(collect_piece(&adj, &removed, v));
            stack.push((v, 0));
        }
    }
    while let Some((start, level)) = stack.pop() {
        let piece = collect_piece(&adj, &removed, start);
        let c = centroid(&adj, &removed, &piece);
        // heaviest edge from c to every vertex of its piece
        let mut todo = vec![(c, 0u64)];
        let mut visited = BTreeSet::from([c]);
        while let Some((x, m)) = todo.pop() {
            labels.get_mut(&x).expect("known vertex").entries.push(LabelEntry {
                separator: c,
                level,
                maxw: m,
            });
            for &(y, w) in &adj[&x] {
                if !removed.contains(&y) && visited.insert(y) {
                    todo.push((y, m.max(w)));
                }
            }
        }
        removed.insert(c);
        for &(y, _) in &adj[&c] {
            if !removed.contains(&y) {
                stack.push((y, level + 1));
            }
        }
    }
    Ok(labels)
}

fn collect_piece(adj: &BTreeMap<u64, Vec<(u64, u64)>>, removed: &BTreeSet<u64>, start: u64) -> Vec<u64> {
    let mut out = vec![start];
    let mut seen = BTreeSet::from([start]);
    let mut i = 0;
    while i < out.len() {
        for &(y, _) in &adj[&out[i]] {
            if !removed.contains(&y) && seen.insert(y) {
                out.push(y);
            }
        }
        i += 1;
    }
    out
}

/// Vertex whose removal leaves pieces of at most half the size; smallest id on ties.
fn centroid(adj: &BTreeMap<u64, Vec<(u64, u64)>>, removed: &BTreeSet<u64>, piece: &[u64]) -> u64 {
    let total = piece.len();
    let root = piece[0];
    // iterative dfs order, then subtree sizes bottom-up
    let mut order = Vec::with_capacity(total);
    let mut par: BTreeMap<u64, u64> = BTreeMap::new();
    let mut stack = vec![root];
    par.insert(root, root);
    while let Some(x) = stack.pop() {
        order.push(x);
        for &(y, _) in &adj[&x] {
            if !removed.contains(&y) && !par.contains_key(&y) {
                par.insert(y, x);
                stack.push(y);
            }
        }
    }
    let mut size: BTreeMap<u64, usize> = BTreeMap::new();
    let mut heaviest_child: BTreeMap<u64, usize> = BTreeMap::new();
    for &x in order.iter().rev() {
        let s = 1 + size.get(&x).copied().unwrap_or(0);
        size.insert(x, s);
        if x != root {
            let p = par[&x];
            *size.entry(p).or_insert(0) += s;
            let h = heaviest_child.entry(p).or_insert(0);
            *h = (*h).max(s);
        }
    }
    let mut best: Option<u64> = None;
    for &x in &order {
        let sub = size[&x];
        let worst = heaviest_child.get(&x).copied().unwrap_or(0).max(total - sub);
        if worst * 2 <= total && best.is_none_or(|b| x < b) {
            best = Some(x);
        }
    }
    best.expect("every tree has a centroid")
}

/// Heaviest edge on the path between `a` and `b` by walking the forest; `None` if disconnected.
pub fn path_max_scan(forest: &[(u64, u64, u64)], a: u64, b: u64) -> Option<u64> {
    if a == b {
        return Some(0);
    }
    let mut adj: BTreeMap<u64, Vec<(u64, u64)>> = BTreeMap::new();
    for &(u, v, w) in forest {
        adj.entry(u).or_default().push((v, w));
        adj.entry(v).or_default().push((u, w));
    }
    let mut best: BTreeMap<u64, u64> = BTreeMap::from([(a, 0)]);
    let mut todo = vec![a];
    while let Some(x) = todo.pop() {
        let m = best[&x];
        for &(y, w) in adj.get(&x).map(Vec::as_slice).unwrap_or(&[]) {
            if let std::collections::btree_map::Entry::Vacant(slot) = best.entry(y) {
                slot.insert(m.max(w));
                todo.push(y);
            }
        }
    }
    best.get(&b).copied()
}
