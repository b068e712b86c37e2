//! Per-key aggregation trees.
//!
//! Machines are grouped into nested blocks: level-j blocks hold `b^j`
//! consecutive small machines and the top level holds all of them. The
//! level-j node of key `x` inside a block is picked by hashing `(x, j)`, so
//! keys spread over the block and no sorting is needed before aggregating.
//! Every node of the tree has fan-in at most `b`.

use std::collections::BTreeMap;

use crate::simcore::{mix, Cluster, MachineId, Message, Outbox, Record, SimError};

#[derive(Debug, Clone)]
pub struct KeyTree {
    k: usize,
    b: usize,
    depth: usize,
    salt: u64,
}

/// depth of a key tree over at most n^{1-γ} machines: ⌈(1-γ)/γ⌉ + 1
pub fn tree_depth(gamma: f64) -> usize {
    ((1.0 - gamma) / gamma - 1e-9).ceil().max(0.0) as usize + 1
}

/// Levels needed so that `b^levels` covers `k` machines.
fn levels_to_cover(k: usize, b: usize) -> usize {
    let mut levels = 1;
    let mut span = b;
    while span < k {
        span = span.saturating_mul(b);
        levels += 1;
    }
    levels
}

/// Position of `key` in a block of `len` machines: a hash of everything but
/// the first word, shifted by the first word. Keys that are consecutive
/// integers (vertex ids) therefore spread exactly evenly over a block.
fn key_slot<K: Record>(key: &K, salt: u64, level: usize, len: usize) -> usize {
    let mut words = Vec::with_capacity(key.words());
    key.encode(&mut words);
    let mut h = mix(salt ^ (level as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
    for &w in words.iter().skip(1) {
        h = mix(h ^ w);
    }
    let len = len as u64;
    let first = words.first().copied().unwrap_or(0);
    ((h % len + first % len) % len) as usize
}

impl KeyTree {
    pub fn new(cluster: &Cluster) -> Self {
        let cfg = cluster.config();
        let (k, b) = (cluster.small_count(), cfg.branching());
        // dense graphs have more than n^{1-γ} small machines and need extra levels
        KeyTree {
            k,
            b,
            depth: tree_depth(cfg.gamma).max(levels_to_cover(k, b)),
            salt: mix(cfg.seed ^ 0x7265_6574),
        }
    }

    pub fn with_shape(k: usize, b: usize, depth: usize, salt: u64) -> Self {
        KeyTree { k, b: b.max(2), depth: depth.max(1), salt }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn branching(&self) -> usize {
        self.b
    }

    pub fn small_count(&self) -> usize {
        self.k
    }

    fn block_size(&self, level: usize) -> usize {
        if level >= self.depth {
            return self.k;
        }
        self.b.saturating_pow(level as u32).min(self.k)
    }

    fn block(&self, level: usize, shard: usize) -> (usize, usize) {
        let size = self.block_size(level).max(1);
        let start = shard / size * size;
        (start, size.min(self.k - start))
    }

    /// Shard that handles `key` at `level` for the block containing `shard`.
    /// Level 0 is the leaf itself.
    pub fn node<K: Record>(&self, key: &K, level: usize, shard: usize) -> usize {
        if level == 0 {
            return shard;
        }
        let (start, len) = self.block(level, shard);
        start + key_slot(key, self.salt, level, len)
    }

    pub fn root<K: Record>(&self, key: &K) -> usize {
        self.node(key, self.depth, 0)
    }

    /// Level `level-1` nodes below the level-`level` node of `key` whose block holds `shard`,
    /// assuming every small machine is a leaf.
    fn all_children<K: Record>(&self, key: &K, level: usize, shard: usize) -> Vec<usize> {
        let (start, len) = self.block(level, shard);
        let sub = self.block_size(level - 1).max(1);
        (start..start + len).step_by(sub).map(|s| self.node(key, level - 1, s)).collect()
    }

    /// The tree of `key` restricted to the given leaves.
    pub fn materialize<K: Record>(&self, key: &K, leaves: &[usize]) -> AggregationTree {
        let mut levels = Vec::with_capacity(self.depth);
        let mut cur: Vec<usize> = leaves.to_vec();
        cur.sort_unstable();
        cur.dedup();
        for level in 1..=self.depth {
            let mut edges: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &c in &cur {
                edges.entry(self.node(key, level, c)).or_default().push(c);
            }
            cur = edges.keys().copied().collect();
            levels.push(edges);
        }
        AggregationTree {
            root: MachineId::of_shard(self.root(key)),
            branching: self.b,
            depth: self.depth,
            levels,
        }
    }
}

/// One key's tree, spelled out: `levels[j-1]` maps each level-j node to its children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationTree {
    pub root: MachineId,
    pub branching: usize,
    pub depth: usize,
    pub levels: Vec<BTreeMap<usize, Vec<usize>>>,
}

impl AggregationTree {
    pub fn children(&self, level: usize, shard: usize) -> &[usize] {
        self.levels
            .get(level.wrapping_sub(1))
            .and_then(|l| l.get(&shard))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn parent(&self, level: usize, shard: usize) -> Option<usize> {
        let up = self.levels.get(level)?;
        up.iter().find(|(_, kids)| kids.contains(&shard)).map(|(&p, _)| p)
    }

    /// Longest leaf-to-root path, in edges.
    pub fn measured_depth(&self) -> usize {
        self.levels.iter().take_while(|l| !l.is_empty()).count()
    }

    pub fn max_fan_in(&self) -> usize {
        self.levels.iter().flat_map(|l| l.values().map(Vec::len)).max().unwrap_or(0)
    }
}

/// What each inner node received on the way up, kept for the way down.
/// `levels[j-1][shard]` maps a key to `(child, value)` pairs sorted by child.
#[derive(Debug, Clone)]
pub struct Routing<K, V> {
    levels: Vec<Vec<BTreeMap<K, Vec<(usize, V)>>>>,
}

impl<K: Ord, V> Routing<K, V> {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    fn words(&self, level: usize, shard: usize) -> usize
    where
        K: Record,
        V: Record,
    {
        self.levels[level - 1][shard]
            .iter()
            .map(|(k, kids)| k.words() + kids.iter().map(|(_, v)| 1 + v.words()).sum::<usize>())
            .sum()
    }
}

fn map_words<K: Record, V: Record>(m: &BTreeMap<K, V>) -> usize {
    m.iter().map(|(k, v)| k.words() + v.words()).sum()
}

fn slot_transient(k: usize, per_shard: impl Fn(usize) -> usize) -> Vec<usize> {
    let mut t = vec![0; k + 1];
    for s in 0..k {
        t[s + 1] = per_shard(s);
    }
    t
}

fn decode_pairs<K: Record, V: Record>(msg: &Message) -> Result<Vec<(K, V)>, SimError> {
    msg.decode::<(K, V)>()
}

/// Up-sweep: every leaf holds partial values per key; after `depth` rounds the
/// root of each key holds the combined value. Routing is kept for a later down-sweep.
pub fn reduce_up<K, V, F>(
    cluster: &mut Cluster,
    tree: &KeyTree,
    label: &str,
    leaves: Vec<BTreeMap<K, V>>,
    combine: &F,
) -> Result<(Vec<BTreeMap<K, V>>, Routing<K, V>), SimError>
where
    K: Record + Ord + Clone,
    V: Record + Clone,
    F: Fn(&mut V, V),
{
    reduce_up_keeping(cluster, tree, label, leaves, combine, &V::clone)
}

/// [`reduce_up`] where a node remembers only `keep(value)` of each child, so
/// routes that never need the children's values cost one word per child.
pub fn reduce_up_keeping<K, V, R, F, P>(
    cluster: &mut Cluster,
    tree: &KeyTree,
    label: &str,
    leaves: Vec<BTreeMap<K, V>>,
    combine: &F,
    keep: &P,
) -> Result<(Vec<BTreeMap<K, V>>, Routing<K, R>), SimError>
where
    K: Record + Ord + Clone,
    V: Record + Clone,
    R: Record,
    F: Fn(&mut V, V),
    P: Fn(&V) -> R,
{
    let k = tree.k;
    let mut cur = leaves;
    cur.resize_with(k, BTreeMap::new);
    let mut levels: Vec<Vec<BTreeMap<K, Vec<(usize, R)>>>> = Vec::with_capacity(tree.depth);
    for level in 1..=tree.depth {
        let mut out = Outbox::new();
        for (s, map) in cur.iter().enumerate() {
            for (key, val) in map {
                let dst = tree.node(key, level, s);
                out.push(MachineId::of_shard(s), MachineId::of_shard(dst), &(key.clone(), val.clone()));
            }
        }
        let transient = slot_transient(k, |s| {
            map_words(&cur[s]) + if level > 1 { routing_words(&levels, level - 1, s) } else { 0 }
        });
        let inboxes = cluster.exchange(&format!("{label}:up{level}"), out, &transient)?;
        let mut next: Vec<BTreeMap<K, V>> = vec![BTreeMap::new(); k];
        let mut kids: Vec<BTreeMap<K, Vec<(usize, R)>>> = (0..k).map(|_| BTreeMap::new()).collect();
        for (slot, msgs) in inboxes.into_iter().enumerate().skip(1) {
            let s = slot - 1;
            for msg in msgs {
                let child = msg.src.shard().unwrap_or(0);
                for (key, val) in decode_pairs::<K, V>(&msg)? {
                    kids[s].entry(key.clone()).or_default().push((child, keep(&val)));
                    match next[s].get_mut(&key) {
                        Some(acc) => combine(acc, val),
                        None => {
                            next[s].insert(key, val);
                        }
                    }
                }
            }
        }
        levels.push(kids);
        cur = next;
    }
    Ok((cur, Routing { levels }))
}

fn routing_words<K: Record + Ord, V: Record>(
    levels: &[Vec<BTreeMap<K, Vec<(usize, V)>>>],
    level: usize,
    s: usize,
) -> usize {
    levels[level - 1][s]
        .iter()
        .map(|(k, kids)| k.words() + kids.iter().map(|(_, v)| 1 + v.words()).sum::<usize>())
        .sum()
}

/// Down-sweep along recorded routing: `split` turns a node's value for a key
/// into one value per child (in the order of the recorded children).
pub fn push_down<K, V, W, S>(
    cluster: &mut Cluster,
    tree: &KeyTree,
    label: &str,
    routing: &Routing<K, V>,
    at_roots: Vec<BTreeMap<K, W>>,
    split: S,
) -> Result<Vec<BTreeMap<K, W>>, SimError>
where
    K: Record + Ord + Clone,
    V: Record,
    W: Record + Clone,
    S: Fn(&W, &[(usize, V)]) -> Vec<W>,
{
    let k = tree.k;
    let mut cur = at_roots;
    cur.resize_with(k, BTreeMap::new);
    for level in (1..=routing.depth()).rev() {
        let mut out = Outbox::new();
        for (s, map) in cur.iter().enumerate() {
            let here = &routing.levels[level - 1][s];
            for (key, val) in map {
                let Some(kids) = here.get(key) else { continue };
                for ((child, _), part) in kids.iter().zip(split(val, kids)) {
                    out.push(MachineId::of_shard(s), MachineId::of_shard(*child), &(key.clone(), part));
                }
            }
        }
        let transient = slot_transient(k, |s| map_words(&cur[s]) + routing.words(level, s));
        let inboxes = cluster.exchange(&format!("{label}:down{level}"), out, &transient)?;
        let mut next: Vec<BTreeMap<K, W>> = vec![BTreeMap::new(); k];
        for (slot, msgs) in inboxes.into_iter().enumerate().skip(1) {
            for msg in msgs {
                for (key, val) in decode_pairs::<K, W>(&msg)? {
                    next[slot - 1].insert(key, val);
                }
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// The roots hand their keys to the large machine. One round.
pub fn roots_to_large<K, V>(
    cluster: &mut Cluster,
    label: &str,
    at_roots: &[BTreeMap<K, V>],
) -> Result<BTreeMap<K, V>, SimError>
where
    K: Record + Ord + Clone,
    V: Record + Clone,
{
    let mut out = Outbox::new();
    for (s, map) in at_roots.iter().enumerate() {
        for (key, val) in map {
            out.push(MachineId::of_shard(s), MachineId::Large, &(key.clone(), val.clone()));
        }
    }
    let k = cluster.small_count();
    let transient = slot_transient(k, |s| at_roots.get(s).map(map_words).unwrap_or(0));
    let inboxes = cluster.exchange(&format!("{label}:to-large"), out, &transient)?;
    let mut res = BTreeMap::new();
    for msg in &inboxes[0] {
        for (key, val) in decode_pairs::<K, V>(msg)? {
            res.insert(key, val);
        }
    }
    Ok(res)
}

/// The large machine hands each key's value to that key's root. One round.
pub fn large_to_roots<K, V>(
    cluster: &mut Cluster,
    tree: &KeyTree,
    label: &str,
    values: &BTreeMap<K, V>,
) -> Result<Vec<BTreeMap<K, V>>, SimError>
where
    K: Record + Ord + Clone,
    V: Record + Clone,
{
    let mut out = Outbox::new();
    for (key, val) in values {
        out.push(MachineId::Large, MachineId::of_shard(tree.root(key)), &(key.clone(), val.clone()));
    }
    let mut transient = vec![0; cluster.slots()];
    transient[0] = map_words(values);
    let inboxes = cluster.exchange(&format!("{label}:from-large"), out, &transient)?;
    let mut res = vec![BTreeMap::new(); tree.k];
    for (slot, msgs) in inboxes.into_iter().enumerate().skip(1) {
        for msg in msgs {
            for (key, val) in decode_pairs::<K, V>(&msg)? {
                res[slot - 1].insert(key, val);
            }
        }
    }
    Ok(res)
}

/// Combines one optional value per small machine into a single value at the
/// large machine. `depth + 1` rounds.
pub fn global_reduce<V, F>(
    cluster: &mut Cluster,
    tree: &KeyTree,
    label: &str,
    values: Vec<Option<V>>,
    combine: &F,
) -> Result<Option<V>, SimError>
where
    V: Record + Clone,
    F: Fn(&mut V, V),
{
    let leaves: Vec<BTreeMap<(), V>> = values
        .into_iter()
        .map(|v| v.map(|v| BTreeMap::from([((), v)])).unwrap_or_default())
        .collect();
    let (roots, _) = reduce_up(cluster, tree, label, leaves, combine)?;
    let mut at_large = roots_to_large(cluster, label, &roots)?;
    Ok(at_large.remove(&()))
}

/// Sends a value from the large machine to every small machine through the
/// global tree. `depth + 1` rounds. Returns the copy each machine received.
pub fn broadcast<V: Record + Clone>(
    cluster: &mut Cluster,
    tree: &KeyTree,
    label: &str,
    value: &V,
) -> Result<Vec<V>, SimError> {
    let k = tree.k;
    let key = ();
    let root = tree.root(&key);
    let mut out = Outbox::new();
    out.push(MachineId::Large, MachineId::of_shard(root), value);
    let mut transient = vec![0; cluster.slots()];
    transient[0] = value.words();
    let inboxes = cluster.exchange(&format!("{label}:from-large"), out, &transient)?;
    let mut holding: Vec<Option<V>> = vec![None; k];
    for (slot, msgs) in inboxes.into_iter().enumerate().skip(1) {
        for msg in msgs {
            holding[slot - 1] = msg.decode::<V>()?.pop();
        }
    }
    for level in (1..=tree.depth).rev() {
        let mut out = Outbox::new();
        for (s, v) in holding.iter().enumerate() {
            let Some(v) = v else { continue };
            if tree.node(&key, level, s) != s {
                continue;
            }
            for child in tree.all_children(&key, level, s) {
                out.push(MachineId::of_shard(s), MachineId::of_shard(child), v);
            }
        }
        let transient = slot_transient(k, |s| holding[s].as_ref().map_or(0, Record::words));
        let inboxes = cluster.exchange(&format!("{label}:down{level}"), out, &transient)?;
        let mut next: Vec<Option<V>> = vec![None; k];
        for (slot, msgs) in inboxes.into_iter().enumerate().skip(1) {
            for msg in msgs {
                next[slot - 1] = msg.decode::<V>()?.pop();
            }
        }
        holding = next;
    }
    holding
        .into_iter()
        .enumerate()
        .map(|(s, v)| {
            v.ok_or_else(|| SimError::Decode(format!("broadcast never reached {}", MachineId::of_shard(s))))
        })
        .collect()
}

/// Exclusive prefix offsets for a down-sweep: children in ascending machine
/// order receive `base`, `base + c0`, `base + c0 + c1`, ...
pub fn prefix_split(base: &u64, kids: &[(usize, u64)]) -> Vec<u64> {
    let mut acc = *base;
    kids.iter()
        .map(|&(_, c)| {
            let o = acc;
            acc += c;
            o
        })
        .collect()
}

pub fn copy_split<W: Clone, V>(val: &W, kids: &[(usize, V)]) -> Vec<W> {
    vec![val.clone(); kids.len()]
}
