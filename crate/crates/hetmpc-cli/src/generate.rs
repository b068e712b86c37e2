//! Seeded graph generators.

use std::collections::HashSet;

use hetmpc::graph::{SimGraph, WEdge};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenKind {
    Gnp,
    Gnm,
    /// two disjoint cycles on n/2 vertices each
    TwoCycles,
    /// one cycle through all n vertices
    Cycle,
    Grid,
    Star,
    Complete,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GenParams {
    pub n: usize,
    pub m: Option<usize>,
    pub p: Option<f64>,
    pub weighted: bool,
    /// largest weight; n³ when absent
    pub max_w: Option<u64>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// The same (kind, params, seed) always gives the same graph.
pub fn generate(kind: GenKind, params: &GenParams, seed: u64) -> Result<SimGraph, CliError> {
    let n = params.n;
    if n < 2 {
        return Err(usage(format!("n must be at least 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(u64, u64)> = match kind {
        GenKind::Gnp => {
            let p = params.p.ok_or_else(|| usage("gnp needs --p"))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(usage(format!("p must lie in [0, 1], got {p}")));
            }
            let mut es = Vec::new();
            for u in 0..n as u64 {
                for v in u + 1..n as u64 {
                    if rng.random_bool(p) {
                        es.push((u, v));
                    }
                }
            }
            es
        }
        GenKind::Gnm => {
            let m = params.m.ok_or_else(|| usage("gnm needs --m"))?;
            let max = n * (n - 1) / 2;
            if m > max {
                return Err(usage(format!("gnm: m = {m} exceeds n(n-1)/2 = {max}")));
            }
            if 2 * m <= max {
                let mut seen = HashSet::new();
                let mut es = Vec::with_capacity(m);
                while es.len() < m {
                    let (a, b) = (rng.random_range(0..n as u64), rng.random_range(0..n as u64));
                    if a != b && seen.insert((a.min(b), a.max(b))) {
                        es.push((a.min(b), a.max(b)));
                    }
                }
                es
            } else {
                let mut all: Vec<(u64, u64)> =
                    (0..n as u64).flat_map(|u| (u + 1..n as u64).map(move |v| (u, v))).collect();
                all.shuffle(&mut rng);
                all.truncate(m);
                all
            }
        }
        GenKind::TwoCycles => {
            if !n.is_multiple_of(2) || n < 6 {
                return Err(usage(format!("two-cycles needs an even n ≥ 6, got {n}")));
            }
            let h = (n / 2) as u64;
            let mut es = ring(0, h);
            es.extend(ring(h, h));
            es
        }
        GenKind::Cycle => {
            if n < 3 {
                return Err(usage("cycle needs n ≥ 3"));
            }
            ring(0, n as u64)
        }
        GenKind::Grid => {
            let rows = (n as f64).sqrt().floor() as usize;
            let cols = n.div_ceil(rows);
            let mut es = Vec::new();
            // row-major, the last row may be partial
            for v in 0..n {
                if v % cols + 1 < cols && v + 1 < n {
                    es.push((v as u64, v as u64 + 1));
                }
                if v + cols < n {
                    es.push((v as u64, (v + cols) as u64));
                }
            }
            es
        }
        GenKind::Star => (1..n as u64).map(|v| (0, v)).collect(),
        GenKind::Complete => (0..n as u64).flat_map(|u| (u + 1..n as u64).map(move |v| (u, v))).collect(),
    };
    let max_w = params.max_w.unwrap_or_else(|| (n as u64).saturating_pow(3)).max(1);
    let edges = pairs
        .into_iter()
        .map(|(u, v)| if params.weighted { WEdge::new(u, v, rng.random_range(1..=max_w)) } else { WEdge::unweighted(u, v) })
        .collect();
    SimGraph::new(n, edges).map_err(|e| usage(e.to_string()))
}

fn ring(offset: u64, len: u64) -> Vec<(u64, u64)> {
    (0..len).map(|i| (offset + i, offset + (i + 1) % len)).collect()
}
