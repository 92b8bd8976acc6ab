use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;

use super::{ClientShard, LabeledSample};
use crate::error::{Error, Result};
use crate::seed::SeedNode;

/// `T` local samples for every class that has at least `T` of them.
/// Members are stored as indices into the owning shard.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BalancedSubset {
    per_class: BTreeMap<usize, Vec<usize>>,
}

impl BalancedSubset {
    pub fn classes(&self) -> BTreeSet<usize> {
        self.per_class.keys().copied().collect()
    }

    pub fn indices(&self, c: usize) -> Option<&[usize]> {
        self.per_class.get(&c).map(Vec::as_slice)
    }

    pub fn samples<'a>(&self, shard: &'a ClientShard, c: usize) -> Vec<&'a LabeledSample> {
        self.indices(c)
            .unwrap_or_default()
            .iter()
            .map(|&i| &shard.samples()[i])
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.per_class.iter().map(|(&c, v)| (c, v.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.per_class.is_empty()
    }
}

/// Draws `t` samples without replacement from every class with at least `t`
/// local samples. Returns the subset and its class set `L_bal`.
pub fn sample_balanced_subset(
    shard: &ClientShard,
    t: usize,
    round_seed: SeedNode,
) -> Result<(BalancedSubset, BTreeSet<usize>)> {
    if t == 0 {
        return Err(Error::argument("balanced-subset threshold must be >= 1"));
    }
    let mut per_class = BTreeMap::new();
    for c in shard.label_set() {
        if shard.per_class_counts()[c] < t {
            continue;
        }
        let members = shard.class_indices(c);
        let mut rng = round_seed.child(c as u64).rng();
        let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), t)
            .into_iter()
            .map(|j| members[j])
            .collect();
        picked.sort_unstable();
        per_class.insert(c, picked);
    }
    let subset = BalancedSubset { per_class };
    let l_bal = subset.classes();
    Ok((subset, l_bal))
}
