use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::simcore::Record;
use crate::{Error, Result};

/// Undirected weighted edge. Unweighted graphs use `w = 1`.
///
/// Edges are totally ordered by `(w, min(u,v), max(u,v))`, which makes all
/// weights distinct in effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WEdge {
    pub u: u64,
    pub v: u64,
    pub w: u64,
}

impl WEdge {
    pub fn new(u: u64, v: u64, w: u64) -> Self {
        WEdge { u, v, w }
    }

    pub fn unweighted(u: u64, v: u64) -> Self {
        WEdge { u, v, w: 1 }
    }

    pub fn lo(&self) -> u64 {
        self.u.min(self.v)
    }

    pub fn hi(&self) -> u64 {
        self.u.max(self.v)
    }

    pub fn key(&self) -> (u64, u64, u64) {
        (self.w, self.lo(), self.hi())
    }

    /// Same edge with endpoints in ascending order.
    pub fn normalized(&self) -> Self {
        WEdge { u: self.lo(), v: self.hi(), w: self.w }
    }

    pub fn other(&self, x: u64) -> u64 {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

impl Ord for WEdge {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for WEdge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Record for WEdge {
    fn words(&self) -> usize {
        3
    }
    fn encode(&self, out: &mut Vec<u64>) {
        out.extend_from_slice(&[self.u, self.v, self.w]);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        let (u, v, w) = <(u64, u64, u64)>::decode(input)?;
        Some(WEdge { u, v, w })
    }
}

/// Input graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimGraph {
    pub n: usize,
    pub edges: Vec<WEdge>,
}

impl SimGraph {
    pub fn new(n: usize, edges: Vec<WEdge>) -> Result<Self> {
        for e in &edges {
            if e.u == e.v {
                return Err(Error::Precondition(format!("self-loop at vertex {}", e.u)));
            }
            if e.u as usize >= n || e.v as usize >= n {
                return Err(Error::Precondition(format!(
                    "edge ({}, {}) leaves the vertex range 0..{n}",
                    e.u, e.v
                )));
            }
            if e.w == 0 {
                return Err(Error::Precondition(format!("edge ({}, {}) has weight 0", e.u, e.v)));
            }
        }
        Ok(SimGraph { n, edges })
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for e in &self.edges {
            d[e.u as usize] += 1;
            d[e.v as usize] += 1;
        }
        d
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    pub fn adjacency(&self) -> Vec<Vec<u64>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.u as usize].push(e.v);
            adj[e.v as usize].push(e.u);
        }
        adj
    }

    /// No parallel edges.
    pub fn is_simple(&self) -> bool {
        let mut seen = std::collections::HashSet::with_capacity(self.edges.len());
        self.edges.iter().all(|e| seen.insert((e.lo(), e.hi())))
    }

    pub fn is_weighted(&self) -> bool {
        self.edges.iter().any(|e| e.w != 1)
    }
}
