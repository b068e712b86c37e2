//! Sample sort on the small machines, with the large machine choosing splitters.

use std::collections::BTreeMap;

use super::tree::{large_to_roots, prefix_split, push_down, reduce_up, roots_to_large, KeyTree};
use crate::graph::WEdge;
use crate::simcore::{words_of, Cluster, MachineId, Outbox, Record, SimError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedLayout<T> {
    pub shards: Vec<Vec<T>>,
    /// smallest item of each machine, `None` for an empty machine
    pub boundaries: Vec<Option<T>>,
}

impl<T: Ord + Clone> SortedLayout<T> {
    pub fn from_shards(shards: Vec<Vec<T>>) -> Self {
        let boundaries = shards.iter().map(|s| s.first().cloned()).collect();
        SortedLayout { shards, boundaries }
    }

    /// Every shard sorted and shards ordered by machine.
    pub fn is_sorted(&self) -> bool {
        let mut last: Option<&T> = None;
        for x in self.shards.iter().flatten() {
            if last.is_some_and(|l| l > x) {
                return false;
            }
            last = Some(x);
        }
        true
    }

    pub fn into_items(self) -> Vec<T> {
        self.shards.into_iter().flatten().collect()
    }
}

/// Item with its origin, so that equal items still have a total order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Tagged<T> {
    item: T,
    origin: u64,
    idx: u64,
}

impl<T: Record> Record for Tagged<T> {
    fn words(&self) -> usize {
        self.item.words() + 2
    }
    fn encode(&self, out: &mut Vec<u64>) {
        self.item.encode(out);
        out.push(self.origin);
        out.push(self.idx);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        let item = T::decode(input)?;
        let (origin, idx) = <(u64, u64)>::decode(input)?;
        Some(Tagged { item, origin, idx })
    }
}

/// `count` evenly spaced elements of a sorted slice.
fn regular_sample<T: Clone>(sorted: &[T], count: usize) -> Vec<T> {
    let count = count.min(sorted.len());
    (0..count).map(|j| sorted[(2 * j + 1) * sorted.len() / (2 * count)].clone()).collect()
}

/// Picks splitters from weighted samples so that bucket `j` receives about `targets[j]` items.
fn pick_splitters<T: Clone>(samples: &[(T, f64)], targets: &[u64]) -> Vec<T> {
    let mut out = Vec::with_capacity(targets.len().saturating_sub(1));
    if samples.is_empty() {
        return out;
    }
    let mut goal = 0.0;
    let mut acc = 0.0;
    let mut i = 0;
    for &t in &targets[..targets.len().saturating_sub(1)] {
        goal += t as f64;
        while i < samples.len() && acc + samples[i].1 <= goal + 1e-9 {
            acc += samples[i].1;
            i += 1;
        }
        out.push(samples[i.min(samples.len() - 1)].0.clone());
    }
    out
}

fn max_words<T: Record>(shards: &[Vec<T>]) -> usize {
    shards.iter().flatten().map(Record::words).max().unwrap_or(1)
}

fn retire_resident<T: Record>(cluster: &mut Cluster, before: &[Vec<T>], after: &[Vec<T>]) {
    for s in 0..cluster.small_count() {
        let id = MachineId::of_shard(s);
        let old = before.get(s).map_or(0, |x| words_of(x));
        let new = after.get(s).map_or(0, |x| words_of(x));
        cluster.set_resident(id, cluster.resident(id).saturating_sub(old) + new);
    }
}

/// Sorts the items held by the small machines. Three rounds: samples to the
/// large machine, splitters back to every machine, routing.
pub fn het_sort<T>(
    cluster: &mut Cluster,
    label: &str,
    shards: Vec<Vec<T>>,
) -> Result<SortedLayout<T>, SimError>
where
    T: Record + Ord + Clone,
{
    let k = cluster.small_count();
    let mut shards = shards;
    shards.resize_with(k, Vec::new);
    let w = max_words(&shards) + 2;
    let tagged: Vec<Vec<Tagged<T>>> = shards
        .iter()
        .enumerate()
        .map(|(s, items)| {
            let mut v: Vec<Tagged<T>> = items
                .iter()
                .enumerate()
                .map(|(i, x)| Tagged { item: x.clone(), origin: s as u64, idx: i as u64 })
                .collect();
            v.sort();
            v
        })
        .collect();

    let sigma = (cluster.large_budget() / (4 * k * w)).max(1);
    let mut out = Outbox::new();
    for (s, items) in tagged.iter().enumerate() {
        let rec = (items.len() as u64, regular_sample(items, sigma));
        out.push(MachineId::of_shard(s), MachineId::Large, &rec);
    }
    let inboxes = cluster.exchange(&format!("{label}:sample"), out, &[])?;

    let mut weighted: Vec<(Tagged<T>, f64)> = Vec::new();
    let mut total = 0u64;
    for msg in &inboxes[0] {
        for (count, sample) in msg.decode::<(u64, Vec<Tagged<T>>)>()? {
            total += count;
            if !sample.is_empty() {
                let wt = count as f64 / sample.len() as f64;
                weighted.extend(sample.into_iter().map(|x| (x, wt)));
            }
        }
    }
    weighted.sort_by(|a, b| a.0.cmp(&b.0));
    let targets: Vec<u64> = (0..k as u64).map(|j| (j + 1) * total / k as u64 - j * total / k as u64).collect();
    let splitters = pick_splitters(&weighted, &targets);

    let per_machine = words_of(&splitters) + 1;
    if per_machine > cluster.small_budget() || per_machine * k > cluster.large_budget() {
        return Err(SimError::Capacity {
            what: "splitter dissemination".into(),
            needed: per_machine.max(per_machine * k),
            available: cluster.small_budget().min(cluster.large_budget()),
        });
    }
    let mut out = Outbox::new();
    for s in 0..k {
        out.push(MachineId::Large, MachineId::of_shard(s), &splitters);
    }
    cluster.exchange(&format!("{label}:splitters"), out, &[])?;

    let mut out = Outbox::new();
    for (s, items) in tagged.iter().enumerate() {
        for x in items {
            let b = splitters.partition_point(|sp| sp <= x);
            out.push(MachineId::of_shard(s), MachineId::of_shard(b), x);
        }
    }
    let inboxes = cluster.exchange(&format!("{label}:route"), out, &[])?;
    let mut result: Vec<Vec<T>> = Vec::with_capacity(k);
    for (slot, msgs) in inboxes.into_iter().enumerate().skip(1) {
        let mut got: Vec<Tagged<T>> = Vec::new();
        for msg in msgs {
            got.extend(msg.decode::<Tagged<T>>()?);
        }
        got.sort();
        let items: Vec<T> = got.into_iter().map(|t| t.item).collect();
        let words = words_of(&items);
        if words > cluster.small_budget() {
            return Err(SimError::Capacity {
                what: format!("sorted shard of {}", MachineId::from_slot(slot)),
                needed: words,
                available: cluster.small_budget(),
            });
        }
        result.push(items);
    }
    retire_resident(cluster, &shards, &result);
    Ok(SortedLayout::from_shards(result))
}

/// Records that belong to a part (a vertex); the order must sort by part first.
pub trait Parted: Record + Ord + Clone {
    fn part(&self) -> u64;
}

/// Result of sorting by part. The tables are what the large machine knows.
#[derive(Debug, Clone)]
pub struct PartLayout<T> {
    pub layout: SortedLayout<T>,
    /// number of records per part
    pub count: BTreeMap<u64, u64>,
    /// first machine holding each part
    pub first: BTreeMap<u64, MachineId>,
    /// records of each part per machine, in machine order
    pub spread: BTreeMap<u64, Vec<(MachineId, u64)>>,
}

/// Sorts records so that every part occupies consecutive machines. The large
/// machine learns the size and location of every part. Runs in `2·depth + 8` rounds.
pub fn het_sort_by_part<T: Parted>(
    cluster: &mut Cluster,
    tree: &KeyTree,
    label: &str,
    shards: Vec<Vec<T>>,
) -> Result<PartLayout<T>, SimError> {
    let k = cluster.small_count();
    let mut shards = shards;
    shards.resize_with(k, Vec::new);
    let w = max_words(&shards);
    for s in shards.iter_mut() {
        s.sort();
    }

    // sizes of the parts, then exclusive offsets back down the same trees
    let counts: Vec<BTreeMap<u64, u64>> = shards
        .iter()
        .map(|items| {
            let mut m = BTreeMap::new();
            for x in items {
                *m.entry(x.part()).or_insert(0) += 1;
            }
            m
        })
        .collect();
    let (roots, routing) = reduce_up(cluster, tree, &format!("{label}:count"), counts, &|a, b| *a += b)?;
    let count = roots_to_large(cluster, label, &roots)?;
    let total: u64 = count.values().sum();
    let cap = total.div_ceil(k as u64).max(1);
    if cap as usize * w > cluster.small_budget() {
        return Err(SimError::Capacity {
            what: "balanced shard after sorting".into(),
            needed: cap as usize * w,
            available: cluster.small_budget(),
        });
    }
    let mut start = BTreeMap::new();
    let mut acc = 0u64;
    for (&p, &c) in &count {
        start.insert(p, acc);
        acc += c;
    }
    let at_roots = large_to_roots(cluster, tree, label, &start)?;
    let offsets = push_down(cluster, tree, &format!("{label}:offset"), &routing, at_roots, prefix_split)?;

    // everything moves to the machine owning its position
    let mut out = Outbox::new();
    for (s, items) in shards.iter().enumerate() {
        let mut next: BTreeMap<u64, u64> = offsets[s].clone();
        for x in items {
            let pos = next.get_mut(&x.part()).expect("offset for every local part");
            out.push(MachineId::of_shard(s), MachineId::of_shard((*pos / cap) as usize), x);
            *pos += 1;
        }
    }
    let inboxes = cluster.exchange(&format!("{label}:place"), out, &[])?;
    let mut placed: Vec<Vec<T>> = vec![Vec::new(); k];
    for (slot, msgs) in inboxes.into_iter().enumerate().skip(1) {
        for msg in msgs {
            placed[slot - 1].extend(msg.decode::<T>()?);
        }
        placed[slot - 1].sort();
    }

    // parts that straddle machines are sorted among their machines
    let mut span: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    let mut held: BTreeMap<(u64, usize), u64> = BTreeMap::new();
    for (&p, &c) in &count {
        let a = start[&p];
        let (lo, hi) = ((a / cap) as usize, ((a + c - 1) / cap) as usize);
        for s in lo..=hi {
            let from = a.max(s as u64 * cap);
            let to = (a + c).min((s as u64 + 1) * cap);
            held.insert((p, s), to - from);
        }
        if lo < hi {
            span.insert(p, (lo, hi));
        }
    }
    let sigma = (cluster.large_budget() / (8 * k * w)).max(1);
    let mut out = Outbox::new();
    for (s, items) in placed.iter().enumerate() {
        let ends = [items.first(), items.last()];
        let mut sent = None;
        for x in ends.into_iter().flatten() {
            let p = x.part();
            if sent == Some(p) {
                continue;
            }
            sent = Some(p);
            let lo = items.partition_point(|y| y.part() < p);
            let hi = items.partition_point(|y| y.part() <= p);
            out.push(MachineId::of_shard(s), MachineId::Large, &(p, regular_sample(&items[lo..hi], sigma)));
        }
    }
    let inboxes = cluster.exchange(&format!("{label}:sample"), out, &[])?;
    let mut samples: BTreeMap<u64, Vec<(T, f64)>> = BTreeMap::new();
    for msg in &inboxes[0] {
        let s = msg.src.shard().unwrap_or(0);
        for (p, sample) in msg.decode::<(u64, Vec<T>)>()? {
            if !span.contains_key(&p) || sample.is_empty() {
                continue;
            }
            let wt = held.get(&(p, s)).copied().unwrap_or(0) as f64 / sample.len() as f64;
            samples.entry(p).or_default().extend(sample.into_iter().map(|x| (x, wt)));
        }
    }
    let mut out = Outbox::new();
    for (&p, &(lo, hi)) in &span {
        let mut smp = samples.remove(&p).unwrap_or_default();
        smp.sort_by(|a, b| a.0.cmp(&b.0));
        let targets: Vec<u64> = (lo..=hi).map(|s| held[&(p, s)]).collect();
        for (j, sp) in pick_splitters(&smp, &targets).into_iter().enumerate() {
            let rec = (p, (j as u64, lo as u64, hi as u64), sp);
            out.push(MachineId::Large, MachineId::of_shard(lo + j), &rec);
        }
    }
    let inboxes = cluster.exchange(&format!("{label}:splitters"), out, &[])?;
    let mut out = Outbox::new();
    for (slot, msgs) in inboxes.iter().enumerate().skip(1) {
        for msg in msgs {
            for rec in msg.decode::<(u64, (u64, u64, u64), T)>()? {
                let (_, (_, lo, hi), _) = &rec;
                for dst in *lo..=*hi {
                    out.push(MachineId::from_slot(slot), MachineId::of_shard(dst as usize), &rec);
                }
            }
        }
    }
    let inboxes = cluster.exchange(&format!("{label}:share"), out, &[])?;
    let mut splits: Vec<BTreeMap<u64, (usize, Vec<(u64, T)>)>> = vec![BTreeMap::new(); k];
    for (slot, msgs) in inboxes.into_iter().enumerate().skip(1) {
        for msg in msgs {
            for (p, (j, lo, _), sp) in msg.decode::<(u64, (u64, u64, u64), T)>()? {
                let e = splits[slot - 1].entry(p).or_insert((lo as usize, Vec::new()));
                e.1.push((j, sp));
            }
        }
    }
    let mut out = Outbox::new();
    let mut kept: Vec<Vec<T>> = vec![Vec::new(); k];
    for (s, items) in placed.iter().enumerate() {
        for x in items {
            match splits[s].get_mut(&x.part()) {
                Some((lo, sps)) => {
                    sps.sort_by_key(|(j, _)| *j);
                    let b = sps.partition_point(|(_, sp)| sp <= x);
                    out.push(MachineId::of_shard(s), MachineId::of_shard(*lo + b), x);
                }
                None => kept[s].push(x.clone()),
            }
        }
    }
    let inboxes = cluster.exchange(&format!("{label}:balance"), out, &[])?;
    for (slot, msgs) in inboxes.into_iter().enumerate().skip(1) {
        for msg in msgs {
            kept[slot - 1].extend(msg.decode::<T>()?);
        }
        kept[slot - 1].sort();
    }

    // machines report what they now hold of the straddling parts
    let mut out = Outbox::new();
    for (s, items) in kept.iter().enumerate() {
        let mut mine: BTreeMap<u64, u64> = BTreeMap::new();
        for x in items.iter().filter(|x| span.contains_key(&x.part())) {
            *mine.entry(x.part()).or_insert(0) += 1;
        }
        for rec in mine {
            out.push(MachineId::of_shard(s), MachineId::Large, &rec);
        }
    }
    let inboxes = cluster.exchange(&format!("{label}:report"), out, &[])?;
    let mut spread: BTreeMap<u64, Vec<(MachineId, u64)>> = BTreeMap::new();
    for (&(p, s), &c) in &held {
        if !span.contains_key(&p) && c > 0 {
            spread.entry(p).or_default().push((MachineId::of_shard(s), c));
        }
    }
    for msg in &inboxes[0] {
        for (p, c) in msg.decode::<(u64, u64)>()? {
            spread.entry(p).or_default().push((msg.src, c));
        }
    }
    for v in spread.values_mut() {
        v.sort();
    }
    let first = spread.iter().map(|(&p, v)| (p, v[0].0)).collect();
    for (s, items) in kept.iter().enumerate() {
        if words_of(items) > cluster.small_budget() {
            return Err(SimError::Capacity {
                what: format!("sorted shard of {}", MachineId::of_shard(s)),
                needed: words_of(items),
                available: cluster.small_budget(),
            });
        }
    }
    retire_resident(cluster, &shards, &kept);
    Ok(PartLayout { layout: SortedLayout::from_shards(kept), count, first, spread })
}

/// Directed copy of an edge, ordered by source, then weight, then target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DirEdge {
    pub src: u64,
    pub w: u64,
    pub dst: u64,
}

impl Record for DirEdge {
    fn words(&self) -> usize {
        3
    }
    fn encode(&self, out: &mut Vec<u64>) {
        out.extend_from_slice(&[self.src, self.w, self.dst]);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        let (src, w, dst) = <(u64, u64, u64)>::decode(input)?;
        Some(DirEdge { src, w, dst })
    }
}

impl Parted for DirEdge {
    fn part(&self) -> u64 {
        self.src
    }
}

/// Puts both directed copies of every edge in place so that each vertex's
/// outgoing edges sit on consecutive machines, lightest first. The large
/// machine learns `first` and `count` (the out-degree) for every vertex.
pub fn arrange_nodes(
    cluster: &mut Cluster,
    tree: &KeyTree,
    edges: &[Vec<WEdge>],
) -> Result<PartLayout<DirEdge>, SimError> {
    let copies: Vec<Vec<DirEdge>> = edges
        .iter()
        .map(|es| {
            es.iter()
                .flat_map(|e| {
                    [DirEdge { src: e.u, w: e.w, dst: e.v }, DirEdge { src: e.v, w: e.w, dst: e.u }]
                })
                .collect()
        })
        .collect();
    for (s, c) in copies.iter().enumerate() {
        let id = MachineId::of_shard(s);
        cluster.set_resident(id, cluster.resident(id) + words_of(c));
    }
    het_sort_by_part(cluster, tree, "arrange", copies)
}
