use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{ClientShard, GlobalDataset};
use crate::error::{Error, Result};
use crate::seed::SeedNode;

/// Draws simplex proportions `p ~ Dir(α·1_n)` as normalized `Gamma(α, 1)`
/// draws. If every draw underflows to zero the whole mass goes to one
/// uniformly chosen coordinate.
fn dirichlet(n: usize, alpha: f64, seed: SeedNode) -> Vec<f64> {
    let mut rng = seed.rng();
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.into_iter().map(|g| g / total).collect()
    } else {
        let pick = rand::Rng::random_range(&mut rng, 0..n);
        (0..n).map(|k| if k == pick { 1.0 } else { 0.0 }).collect()
    }
}

/// Splits `total` items by `proportions` with largest-remainder rounding, so
/// the parts sum to `total` exactly. Ties go to the lower index.
pub(crate) fn largest_remainder(total: usize, proportions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut parts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    // `assigned` can only fall short of `total`, by less than `parts.len()`.
    for &k in order.iter().cycle().take(total.saturating_sub(assigned)) {
        parts[k] += 1;
    }
    parts
}

/// Non-i.i.d. split of `ds` across `n_clients` shards: every class is divided
/// independently by Dirichlet proportions.
pub fn dirichlet_partition(
    ds: &GlobalDataset,
    n_clients: usize,
    alpha: f64,
    seed: SeedNode,
) -> Result<Vec<ClientShard>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::argument(format!("Dirichlet alpha must be > 0, got {alpha}")));
    }
    if n_clients == 0 {
        return Err(Error::argument("need at least one client"));
    }
    let mut owner = vec![0usize; ds.len()];
    for c in 0..ds.num_classes() {
        let members: Vec<usize> = ds
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == c)
            .map(|(i, _)| i)
            .collect();
        let class_seed = seed.child(c as u64);
        let proportions = dirichlet(n_clients, alpha, class_seed);
        let parts = largest_remainder(members.len(), &proportions);
        let mut cursor = members.iter();
        for (client, &n) in parts.iter().enumerate() {
            for &i in cursor.by_ref().take(n) {
                owner[i] = client;
            }
        }
    }
    let mut buckets = vec![Vec::new(); n_clients];
    for (sample, &k) in ds.samples().iter().zip(&owner) {
        buckets[k].push(sample.clone());
    }
    buckets
        .into_iter()
        .enumerate()
        .map(|(k, samples)| ClientShard::new(k, samples, ds.num_classes()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardManifestEntry {
    pub client_id: usize,
    pub per_class_counts: Vec<usize>,
}

/// Per-client class counts, for diagnostics.
pub fn shard_manifest(shards: &[ClientShard]) -> Vec<ShardManifestEntry> {
    shards
        .iter()
        .map(|s| ShardManifestEntry {
            client_id: s.client_id,
            per_class_counts: s.per_class_counts().to_vec(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{longtail_counts, synth_gaussian_mixture};

    fn dataset(seed: u64) -> GlobalDataset {
        let counts = longtail_counts(200, 10.0, 5).unwrap();
        synth_gaussian_mixture(5, 4, &counts, 0.5, SeedNode::new(seed)).unwrap()
    }

    #[test]
    fn largest_remainder_conserves() {
        assert_eq!(largest_remainder(10, &[0.25, 0.25, 0.5]), vec![3, 2, 5]);
        assert_eq!(largest_remainder(7, &[1.0 / 3.0; 3]), vec![3, 2, 2]);
        assert_eq!(largest_remainder(0, &[0.5, 0.5]), vec![0, 0]);
    }

    #[test]
    fn single_client_gets_everything() {
        let ds = dataset(1);
        let shards = dirichlet_partition(&ds, 1, 0.5, SeedNode::new(2)).unwrap();
        assert_eq!(shards.len(), 1);
        assert_eq!(shards[0].samples(), ds.samples());
    }

    #[test]
    fn conserves_class_counts() {
        let ds = dataset(3);
        for seed in 0..20 {
            let shards = dirichlet_partition(&ds, 7, 0.3, SeedNode::new(seed)).unwrap();
            let mut totals = vec![0; ds.num_classes()];
            for s in &shards {
                for (t, n) in totals.iter_mut().zip(s.per_class_counts()) {
                    *t += n;
                }
            }
            assert_eq!(totals, ds.class_counts());
        }
    }

    #[test]
    fn concentrated_alpha_is_near_uniform() {
        let counts = vec![1000; 3];
        for seed in 0..3 {
            let ds = synth_gaussian_mixture(3, 2, &counts, 0.5, SeedNode::new(seed)).unwrap();
            let shards = dirichlet_partition(&ds, 10, 10_000.0, SeedNode::new(100 + seed)).unwrap();
            for s in &shards {
                for &n in s.per_class_counts() {
                    assert!((85..=115).contains(&n), "count {n} outside 100 ± 15%");
                }
            }
        }
    }

    #[test]
    fn bad_alpha_rejected() {
        let ds = dataset(1);
        assert!(dirichlet_partition(&ds, 3, 0.0, SeedNode::new(0)).is_err());
        assert!(dirichlet_partition(&ds, 0, 1.0, SeedNode::new(0)).is_err());
    }

    #[test]
    fn tiny_alpha_still_conserves() {
        let ds = dataset(4);
        let shards = dirichlet_partition(&ds, 5, 1e-3, SeedNode::new(9)).unwrap();
        let total: usize = shards.iter().map(ClientShard::len).sum();
        assert_eq!(total, ds.len());
    }

    #[test]
    fn manifest_lists_every_client() {
        let ds = dataset(2);
        let shards = dirichlet_partition(&ds, 4, 1.0, SeedNode::new(1)).unwrap();
        let m = shard_manifest(&shards);
        assert_eq!(m.len(), 4);
        assert_eq!(m[2].per_class_counts, shards[2].per_class_counts());
    }
}
