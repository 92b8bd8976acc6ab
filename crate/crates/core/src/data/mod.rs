//! Long-tailed dataset construction, non-i.i.d. client partitioning and
//! per-round balanced subsets.

mod counts;
mod csv_io;
mod partition;
mod subset;
mod synth;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use counts::{binary_imbalance_counts, imbalance_ratio, longtail_counts};
pub use csv_io::{read_csv_samples, write_csv_samples};
pub use partition::{dirichlet_partition, shard_manifest, ShardManifestEntry};
pub use subset::{sample_balanced_subset, BalancedSubset};
pub use synth::{synth_gaussian_mixture, GaussianMixture, DEFAULT_SIGMA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledSample {
    pub fn as_pair(&self) -> (&[f64], usize) {
        (&self.features, self.label)
    }
}

fn count_labels(samples: &[LabeledSample], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for s in samples {
        counts[s.label] += 1;
    }
    counts
}

fn check_samples(samples: &[LabeledSample], num_classes: usize) -> Result<()> {
    let dim = samples.first().map(|s| s.features.len());
    for (i, s) in samples.iter().enumerate() {
        if s.label >= num_classes {
            return Err(Error::argument(format!(
                "sample {i} has label {} but there are {num_classes} classes",
                s.label
            )));
        }
        if Some(s.features.len()) != dim {
            return Err(Error::config(format!("sample {i} has a different feature dimension")));
        }
    }
    Ok(())
}

/// The pooled training (or test) set.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDataset {
    samples: Vec<LabeledSample>,
    num_classes: usize,
    class_counts: Vec<usize>,
}

impl GlobalDataset {
    pub fn new(samples: Vec<LabeledSample>, num_classes: usize) -> Result<Self> {
        check_samples(&samples, num_classes)?;
        let class_counts = count_labels(&samples, num_classes);
        Ok(GlobalDataset {
            samples,
            num_classes,
            class_counts,
        })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }

    /// `max n_c / min n_c` over classes with at least one sample.
    pub fn ir(&self) -> f64 {
        imbalance_ratio(&self.class_counts)
    }
}

/// One client's local data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub client_id: usize,
    samples: Vec<LabeledSample>,
    per_class_counts: Vec<usize>,
}

impl ClientShard {
    pub fn new(client_id: usize, samples: Vec<LabeledSample>, num_classes: usize) -> Result<Self> {
        check_samples(&samples, num_classes)?;
        let per_class_counts = count_labels(&samples, num_classes);
        Ok(ClientShard {
            client_id,
            samples,
            per_class_counts,
        })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn per_class_counts(&self) -> &[usize] {
        &self.per_class_counts
    }

    pub fn num_classes(&self) -> usize {
        self.per_class_counts.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Classes with at least one local sample.
    pub fn label_set(&self) -> BTreeSet<usize> {
        self.per_class_counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(c, _)| c)
            .collect()
    }

    /// Indices (into `samples`) of every sample of class `c`.
    pub fn class_indices(&self, c: usize) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == c)
            .map(|(i, _)| i)
            .collect()
    }
}
