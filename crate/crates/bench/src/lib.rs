//! Fixtures shared by the benchmarks.

use redgrape_core::data::{dirichlet_partition, longtail_counts, synth_gaussian_mixture, ClientShard};
use redgrape_core::nn::{ModelSpec, ParamSet};
use redgrape_core::SeedNode;

/// Desk-profile shards (C=10, dim=32, IR=100, 10 clients) and a fresh
/// two-stream model.
pub fn desk_fixture(seed: u64) -> (Vec<ClientShard>, ParamSet) {
    let counts = longtail_counts(1000, 100.0, 10).expect("valid counts");
    let ds = synth_gaussian_mixture(10, 32, &counts, 0.8, SeedNode::new(seed)).expect("valid data");
    let shards = dirichlet_partition(&ds, 10, 1.0, SeedNode::new(seed + 1)).expect("valid split");
    let params = ModelSpec {
        input_dim: 32,
        layer_widths: vec![64, 32],
        num_classes: 10,
        aux_classifier: true,
        classifier_bias: false,
    }
    .init(SeedNode::new(seed + 2))
    .expect("valid model");
    (shards, params)
}
