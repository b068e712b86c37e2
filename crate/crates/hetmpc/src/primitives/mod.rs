//! Sorting, aggregation and dissemination on top of the cluster.
//!
//! Values are grouped by key (usually a vertex id). A key's partial values
//! travel up that key's tree to its root, and from there to the large machine
//! if needed; dissemination runs the same trees backwards.

mod sort;
pub mod tree;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

pub use sort::{arrange_nodes, het_sort, het_sort_by_part, DirEdge, PartLayout, Parted, SortedLayout};
pub use tree::{broadcast, global_reduce, AggregationTree, KeyTree, Routing};

use crate::simcore::{Cluster, Record, SimError};
use tree::{copy_split, large_to_roots, push_down, reduce_up, reduce_up_keeping, roots_to_large};

/// Combines the values of every key and delivers `f(A_key)` to the large
/// machine. `depth + 1` rounds. The routing can serve a later [`disseminate_along`].
pub fn aggregate<K, V, F>(
    cluster: &mut Cluster,
    tree: &KeyTree,
    label: &str,
    leaves: Vec<BTreeMap<K, V>>,
    combine: F,
) -> Result<(BTreeMap<K, V>, Routing<K, ()>), SimError>
where
    K: Record + Ord + Clone,
    V: Record + Clone,
    F: Fn(&mut V, V),
{
    let (roots, routing) = reduce_up_keeping(cluster, tree, label, leaves, &combine, &|_| ())?;
    let at_large = roots_to_large(cluster, label, &roots)?;
    Ok((at_large, routing))
}

/// Like [`aggregate`] but every leaf learns the result for its own keys, and
/// the large machine is not involved. `2·depth` rounds.
pub fn allreduce<K, V, F>(
    cluster: &mut Cluster,
    tree: &KeyTree,
    label: &str,
    leaves: Vec<BTreeMap<K, V>>,
    combine: F,
) -> Result<Vec<BTreeMap<K, V>>, SimError>
where
    K: Record + Ord + Clone,
    V: Record + Clone,
    F: Fn(&mut V, V),
{
    let (roots, routing) = reduce_up_keeping(cluster, tree, label, leaves, &combine, &|_| ())?;
    push_down(cluster, tree, label, &routing, roots, copy_split)
}

/// Sends `values[key]` from the large machine to every small machine that
/// holds `key`, using the routes of an earlier aggregation over the same keys.
/// `depth + 1` rounds.
pub fn disseminate_along<K, V, W>(
    cluster: &mut Cluster,
    tree: &KeyTree,
    label: &str,
    routing: &Routing<K, W>,
    values: &BTreeMap<K, V>,
) -> Result<Vec<BTreeMap<K, V>>, SimError>
where
    K: Record + Ord + Clone,
    V: Record + Clone,
    W: Record,
{
    let at_roots = large_to_roots(cluster, tree, label, values)?;
    push_down(cluster, tree, label, routing, at_roots, copy_split)
}

/// Sends `values[key]` from the large machine to every small machine whose
/// `holders` set contains `key`. Holders first register their keys, so keys
/// nobody holds cost no messages. `2·depth + 2` rounds.
pub fn disseminate<K, V>(
    cluster: &mut Cluster,
    tree: &KeyTree,
    label: &str,
    values: &BTreeMap<K, V>,
    holders: &[BTreeSet<K>],
) -> Result<Vec<BTreeMap<K, V>>, SimError>
where
    K: Record + Ord + Clone,
    V: Record + Clone,
{
    let value_words: usize = values.iter().map(|(k, v)| k.words() + v.words()).sum();
    if value_words > cluster.large_budget() {
        return Err(SimError::Capacity {
            what: "values to disseminate".into(),
            needed: value_words,
            available: cluster.large_budget(),
        });
    }
    let leaves: Vec<BTreeMap<K, ()>> =
        holders.iter().map(|h| h.iter().map(|k| (k.clone(), ())).collect()).collect();
    let (roots, routing) = reduce_up(cluster, tree, &format!("{label}:register"), leaves, &|_, _| {})?;
    let wanted = roots_to_large(cluster, label, &roots)?;
    let send: BTreeMap<K, V> =
        values.iter().filter(|(k, _)| wanted.contains_key(k)).map(|(k, v)| (k.clone(), v.clone())).collect();
    disseminate_along(cluster, tree, label, &routing, &send)
}

/// Keeps the `cap` smallest items of two sorted lists. An aggregation
/// function: applying it to partial results equals applying it to the union.
pub fn keep_smallest<T: Ord + Clone>(cap: usize) -> impl Fn(&mut Vec<T>, Vec<T>) {
    move |acc, other| {
        acc.extend(other);
        acc.sort();
        acc.dedup();
        acc.truncate(cap);
    }
}

/// Checks `combine` on random regroupings of `values`: folding any grouping
/// in any order must give the same result as a left fold.
pub fn check_combine<V, F, R>(values: &[V], combine: F, trials: usize, rng: &mut R) -> bool
where
    V: Clone + PartialEq,
    F: Fn(&mut V, V),
    R: Rng,
{
    let Some((head, tail)) = values.split_first() else { return true };
    let mut reference = head.clone();
    for v in tail {
        combine(&mut reference, v.clone());
    }
    for _ in 0..trials {
        let mut order: Vec<V> = values.to_vec();
        order.shuffle(rng);
        let groups = rng.random_range(1..=order.len());
        let mut parts: Vec<Option<V>> = vec![None; groups];
        for v in order {
            let g = rng.random_range(0..groups);
            match &mut parts[g] {
                Some(acc) => combine(acc, v),
                slot => *slot = Some(v),
            }
        }
        let mut it = parts.into_iter().flatten();
        let mut acc = it.next().expect("at least one value");
        for p in it {
            combine(&mut acc, p);
        }
        if acc != reference {
            return false;
        }
    }
    true
}
