//! ℓ₀-sampling sketches of vertex incidence vectors.
//!
//! Coordinate `a·n + b` (a < b) of vertex v's vector is +1 if v = a and the
//! edge exists, −1 if v = b. Summing the vectors of a vertex set cancels the
//! edges inside it, so the sum of their sketches samples the cut.

use rand::Rng;
use serde::Serialize;

use crate::simcore::{ceil_log2, Record};

/// The Mersenne prime 2⁶¹ − 1.
pub const Q: u64 = (1 << 61) - 1;

pub fn add_mod(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= Q {
        s - Q
    } else {
        s
    }
}

pub fn sub_mod(a: u64, b: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + Q - b
    }
}

pub fn mul_mod(a: u64, b: u64) -> u64 {
    let p = a as u128 * b as u128;
    let lo = (p as u64) & Q;
    let hi = (p >> 61) as u64;
    add_mod(lo, hi)
}

pub fn pow_mod(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1;
    base %= Q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base);
        }
        base = mul_mod(base, base);
        exp >>= 1;
    }
    acc
}

/// Index of edge {a, b} in the incidence vectors.
pub fn coordinate(n: usize, a: u64, b: u64) -> u64 {
    let (lo, hi) = (a.min(b), a.max(b));
    lo * n as u64 + hi
}

/// Shape of a sketch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SketchParams {
    /// independent samplers R
    pub instances: usize,
    /// subsampling levels L
    pub levels: usize,
    /// one-sparse cells per level
    pub buckets: usize,
    /// independence of the hash (polynomial degree + 1)
    pub t: usize,
}

impl SketchParams {
    /// R = c₁·⌈log₂n⌉, L = 2⌈log₂n⌉, t = 2⌈log₂n⌉.
    pub fn for_n(n: usize, c1: usize, buckets: usize) -> Self {
        let lg = ceil_log2(n).max(1);
        SketchParams { instances: c1 * lg, levels: 2 * lg, buckets: buckets.max(1), t: 2 * lg }
    }
}

/// Shared randomness: per instance, the hash polynomial and the fingerprint base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchKeys {
    pub n: usize,
    pub params: SketchParams,
    /// `instances × t` coefficients
    pub coef: Vec<u64>,
    /// fingerprint base per instance
    pub z: Vec<u64>,
}

impl SketchKeys {
    pub fn generate<R: Rng>(n: usize, params: SketchParams, rng: &mut R) -> Self {
        let coef = (0..params.instances * params.t).map(|_| rng.random_range(0..Q)).collect();
        let z = (0..params.instances).map(|_| rng.random_range(2..Q)).collect();
        SketchKeys { n, params, coef, z }
    }

    fn hash(&self, r: usize, x: u64) -> u64 {
        let t = self.params.t;
        let x = x % Q;
        self.coef[r * t..(r + 1) * t].iter().rev().fold(0, |acc, &c| add_mod(mul_mod(acc, x), c))
    }

    /// Deepest level holding `x` in instance `r`, and its bucket.
    pub fn place(&self, r: usize, x: u64) -> (usize, usize) {
        let h = self.hash(r, x);
        let level = (h.trailing_zeros() as usize).min(self.params.levels - 1);
        // the high bits are independent of the low ones for a uniform h
        let bucket = ((h >> 32) % self.params.buckets as u64) as usize;
        (level, bucket)
    }

    /// Placement and fingerprint term of coordinate `idx` in every instance,
    /// given `zi(r)` = z_r^idx.
    pub fn terms(&self, idx: u64, zi: impl Fn(usize) -> u64) -> Vec<Term> {
        (0..self.params.instances)
            .map(|r| {
                let (deepest, bucket) = self.place(r, idx);
                Term { deepest, bucket, zi: zi(r) }
            })
            .collect()
    }

    fn cell_index(&self, r: usize, level: usize, bucket: usize) -> u32 {
        ((r * self.params.levels + level) * self.params.buckets + bucket) as u32
    }
}

impl Record for SketchKeys {
    fn words(&self) -> usize {
        5 + self.coef.len() + self.z.len()
    }
    fn encode(&self, out: &mut Vec<u64>) {
        let p = &self.params;
        out.extend_from_slice(&[self.n as u64, p.instances as u64, p.levels as u64, p.buckets as u64, p.t as u64]);
        out.extend_from_slice(&self.coef);
        out.extend_from_slice(&self.z);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        if input.len() < 5 {
            return None;
        }
        let h: Vec<usize> = input[..5].iter().map(|&w| w as usize).collect();
        let params = SketchParams { instances: h[1], levels: h[2], buckets: h[3], t: h[4] };
        let need = 5 + params.instances * params.t + params.instances;
        if input.len() < need {
            return None;
        }
        let coef = input[5..5 + params.instances * params.t].to_vec();
        let z = input[5 + params.instances * params.t..need].to_vec();
        *input = &input[need..];
        Some(SketchKeys { n: h[0], params, coef, z })
    }
}

/// What one coordinate contributes to one instance.
#[derive(Debug, Clone, Copy)]
pub struct Term {
    pub deepest: usize,
    pub bucket: usize,
    pub zi: u64,
}

/// One-sparse recovery cell: Σx, Σx·i (both mod 2⁶⁴) and Σx·zⁱ mod q.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Cell {
    pub count: u64,
    pub idsum: u64,
    pub fp: u64,
}

impl Cell {
    fn is_zero(&self) -> bool {
        self.count == 0 && self.idsum == 0 && self.fp == 0
    }

    fn add(&mut self, o: &Cell) {
        self.count = self.count.wrapping_add(o.count);
        self.idsum = self.idsum.wrapping_add(o.idsum);
        self.fp = add_mod(self.fp, o.fp);
    }

    /// The single coordinate if the cell passes the one-sparse test.
    fn decode(&self, z: u64, universe: u64) -> Option<u64> {
        let c = self.count as i64;
        if c == 0 {
            return None;
        }
        let s = self.idsum as i64;
        if s % c != 0 {
            return None;
        }
        let idx = s / c;
        if idx < 0 || idx as u64 >= universe {
            return None;
        }
        let zi = pow_mod(z, idx as u64);
        let want = if c > 0 { mul_mod(c as u64 % Q, zi) } else { sub_mod(0, mul_mod(c.unsigned_abs() % Q, zi)) };
        (want == self.fp).then_some(idx as u64)
    }
}

/// Outcome of sampling a sketch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sample {
    Edge(u64, u64),
    Empty,
    Fail,
}

/// Sparse sketch: the nonzero cells sorted by index (4 words each).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct L0Sketch {
    pub cells: Vec<(u32, Cell)>,
}

impl L0Sketch {
    pub fn is_zero(&self) -> bool {
        self.cells.is_empty()
    }

    /// Sums cells given in any order, with repeats.
    pub fn from_cells(mut cells: Vec<(u32, Cell)>) -> Self {
        cells.sort_unstable_by_key(|c| c.0);
        let mut out: Vec<(u32, Cell)> = Vec::with_capacity(cells.len());
        for (i, c) in cells {
            match out.last_mut() {
                Some((j, acc)) if *j == i => acc.add(&c),
                _ => {
                    if out.last().is_some_and(|(_, acc)| acc.is_zero()) {
                        out.pop();
                    }
                    out.push((i, c));
                }
            }
        }
        if out.last().is_some_and(|(_, acc)| acc.is_zero()) {
            out.pop();
        }
        L0Sketch { cells: out }
    }

    /// Adds ±e_{coordinate(a, b)}; `positive` for the smaller endpoint's vector.
    pub fn add_coordinate(&mut self, keys: &SketchKeys, a: u64, b: u64, positive: bool) {
        let idx = coordinate(keys.n, a, b);
        let terms = keys.terms(idx, |r| pow_mod(keys.z[r], idx));
        let mut cells = Vec::new();
        push_terms(&mut cells, keys, idx, &terms, positive);
        self.add(&L0Sketch::from_cells(cells));
    }

    /// Sketch of v's incidence vector restricted to `edges`.
    pub fn of_vertex(keys: &SketchKeys, v: u64, edges: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut s = L0Sketch::default();
        for (a, b) in edges {
            if a == v || b == v {
                let other = if a == v { b } else { a };
                s.add_coordinate(keys, v, other, v < other);
            }
        }
        s
    }

    pub fn add(&mut self, other: &L0Sketch) {
        if other.cells.is_empty() {
            return;
        }
        let mut out = Vec::with_capacity(self.cells.len() + other.cells.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.cells, &other.cells);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                out.push(b[j]);
                j += 1;
            } else {
                let mut c = a[i].1;
                c.add(&b[j].1);
                if !c.is_zero() {
                    out.push((a[i].0, c));
                }
                i += 1;
                j += 1;
            }
        }
        self.cells = out;
    }

    /// Draws a coordinate of the summed vector with instance `r`, densest level first.
    pub fn sample(&self, keys: &SketchKeys, r: usize) -> Sample {
        let p = &keys.params;
        let lo = keys.cell_index(r, 0, 0);
        let hi = lo + (p.levels * p.buckets) as u32;
        let from = self.cells.partition_point(|c| c.0 < lo);
        let to = self.cells.partition_point(|c| c.0 < hi);
        let universe = (keys.n as u64).saturating_mul(keys.n as u64);
        for (_, cell) in &self.cells[from..to] {
            if let Some(idx) = cell.decode(keys.z[r], universe) {
                let n = keys.n as u64;
                let (a, b) = (idx / n, idx % n);
                if a < b {
                    return Sample::Edge(a, b);
                }
            }
        }
        if from < to {
            Sample::Fail
        } else {
            Sample::Empty
        }
    }
}

/// Appends the cells of ±e_idx, given its precomputed [`Term`]s.
pub fn push_terms(out: &mut Vec<(u32, Cell)>, keys: &SketchKeys, idx: u64, terms: &[Term], positive: bool) {
    for (r, t) in terms.iter().enumerate() {
        let delta = if positive {
            Cell { count: 1, idsum: idx, fp: t.zi }
        } else {
            Cell { count: u64::MAX, idsum: idx.wrapping_neg(), fp: sub_mod(0, t.zi) }
        };
        for level in 0..=t.deepest {
            out.push((keys.cell_index(r, level, t.bucket), delta));
        }
    }
}

impl Record for L0Sketch {
    fn words(&self) -> usize {
        1 + 4 * self.cells.len()
    }
    fn encode(&self, out: &mut Vec<u64>) {
        out.push(self.cells.len() as u64);
        for &(i, c) in &self.cells {
            out.extend_from_slice(&[i as u64, c.count, c.idsum, c.fp]);
        }
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        let len = *input.first()? as usize;
        if input.len() < 1 + 4 * len {
            return None;
        }
        let cells = input[1..1 + 4 * len].chunks(4).map(|w| (w[0] as u32, Cell { count: w[1], idsum: w[2], fp: w[3] })).collect();
        *input = &input[1 + 4 * len..];
        Some(L0Sketch { cells })
    }
}
