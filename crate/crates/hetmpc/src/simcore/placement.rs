use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cluster::mix;
use super::record::{words_of, Record};
use super::{Cluster, MachineId, SimError};

/// How the input edges are initially spread over the small machines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// fill machines in input order, `shard` records each
    Adversarial { shard: usize },
    /// record j goes to machine j mod K
    RoundRobin,
    /// a seeded permutation, then balanced contiguous shards
    Seeded,
}

/// Places `items` on the small machines and declares their resident state.
/// Returns the per-machine shards, indexed by zero-based shard number.
pub fn distribute_edges<T: Record + Clone>(
    cluster: &mut Cluster,
    items: &[T],
    placement: Placement,
) -> Result<Vec<Vec<T>>, SimError> {
    let k = cluster.small_count();
    let mut shards: Vec<Vec<T>> = vec![Vec::new(); k];
    match placement {
        Placement::Adversarial { shard } => {
            let shard = shard.max(1);
            if items.len() > shard * k {
                return Err(SimError::Capacity {
                    what: format!("{} records in shards of {shard}", items.len()),
                    needed: items.len(),
                    available: shard * k,
                });
            }
            for (j, chunk) in items.chunks(shard).enumerate() {
                shards[j] = chunk.to_vec();
            }
        }
        Placement::RoundRobin => {
            for (j, x) in items.iter().enumerate() {
                shards[j % k].push(x.clone());
            }
        }
        Placement::Seeded => {
            let mut order: Vec<usize> = (0..items.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(mix(cluster.config().seed ^ 0x5eed));
            order.shuffle(&mut rng);
            for (i, shard) in balanced_ranges(items.len(), k).into_iter().enumerate() {
                shards[i] = order[shard].iter().map(|&j| items[j].clone()).collect();
            }
        }
    }
    let budget = cluster.small_budget();
    let total = words_of(items);
    if total > budget * k {
        return Err(SimError::Capacity {
            what: "input graph on the small machines".into(),
            needed: total,
            available: budget * k,
        });
    }
    for (i, shard) in shards.iter().enumerate() {
        let w = words_of(shard);
        if w > budget {
            return Err(SimError::Capacity {
                what: format!("initial shard of {}", MachineId::of_shard(i)),
                needed: w,
                available: budget,
            });
        }
        cluster.set_resident(MachineId::of_shard(i), w);
    }
    Ok(shards)
}

/// Splits `0..len` into `parts` contiguous ranges whose sizes differ by at most one.
pub fn balanced_ranges(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let q = len / parts;
    let r = len % parts;
    let mut start = 0;
    (0..parts)
        .map(|i| {
            let size = q + usize::from(i < r);
            let range = start..start + size;
            start += size;
            range
        })
        .collect()
}
