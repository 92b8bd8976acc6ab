use std::collections::BTreeSet;

use proptest::prelude::*;
use redgrape_core::client::{compute_local_prototypes, local_train, LocalTrainConfig};
use redgrape_core::data::{
    dirichlet_partition, longtail_counts, sample_balanced_subset, synth_gaussian_mixture,
    ClientShard, GlobalDataset,
};
use redgrape_core::eval::tail_classes;
use redgrape_core::nn::{DenseMatrix, ModelSpec, ParamSet};
use redgrape_core::protocol::{
    aggregate, aggregation_weights, run_round, ClientProcedure, EvalContext, RoundConfig,
    ServerState,
};
use redgrape_core::{ClientRoundReport, PrototypeTable, SeedNode};

fn setup(seed: u64) -> (GlobalDataset, Vec<ClientShard>, ParamSet) {
    let counts = longtail_counts(60, 10.0, 4).unwrap();
    let ds = synth_gaussian_mixture(4, 6, &counts, 0.8, SeedNode::new(seed)).unwrap();
    let shards = dirichlet_partition(&ds, 3, 0.5, SeedNode::new(seed + 1)).unwrap();
    let params = ModelSpec {
        input_dim: 6,
        layer_widths: vec![8, 5],
        num_classes: 4,
        aux_classifier: true,
        classifier_bias: false,
    }
    .init(SeedNode::new(seed + 2))
    .unwrap();
    (ds, shards, params)
}

fn local_cfg(active: bool) -> LocalTrainConfig {
    LocalTrainConfig {
        lr: 0.05,
        epochs: 2,
        batch_size: 8,
        momentum: 0.9,
        lambda: 0.5,
        threshold: Some(2),
        rebalance_active: active,
    }
}

fn scalar_report(id: usize, n: usize, g: f64) -> ClientRoundReport {
    ClientRoundReport {
        client_id: id,
        local_gradients: ParamSet {
            encoder: vec![],
            main_classifier: DenseMatrix::from_vec(1, 1, vec![g]).unwrap(),
            aux_classifier: None,
            classifier_bias: false,
        },
        local_prototypes: Default::default(),
        sample_count: n,
        train_loss: 0.0,
    }
}

proptest! {
    #[test]
    fn weights_sum_to_one(sizes in prop::collection::vec(1usize..10_000, 1..20)) {
        let reports: Vec<_> = sizes.iter().enumerate().map(|(i, &n)| scalar_report(i, n, 0.0)).collect();
        let w = aggregation_weights(&reports);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregation_ignores_report_order(
        entries in prop::collection::vec((1usize..500, -5.0..5.0f64), 1..8),
        rotate in 0usize..8,
    ) {
        let reports: Vec<_> = entries.iter().enumerate().map(|(i, &(n, g))| scalar_report(i, n, g)).collect();
        let mut shuffled = reports.clone();
        let len = shuffled.len();
        shuffled.rotate_left(rotate % len);
        let global = scalar_report(0, 1, 0.25).local_gradients;
        let a = aggregate(&global, &reports, 1.0).unwrap();
        let b = aggregate(&global, &shuffled, 1.0).unwrap();
        prop_assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn balanced_subset_takes_exactly_t_per_eligible_class(seed in 0u64..200, t in 1usize..6) {
        let (_, shards, _) = setup(seed);
        for shard in &shards {
            let (subset, l_bal) = sample_balanced_subset(shard, t, SeedNode::new(seed)).unwrap();
            let eligible: BTreeSet<usize> = (0..4).filter(|&c| shard.per_class_counts()[c] >= t).collect();
            prop_assert_eq!(&l_bal, &eligible);
            for (c, idx) in subset.iter() {
                prop_assert_eq!(idx.len(), t);
                prop_assert!(idx.iter().all(|&i| shard.samples()[i].label == c));
                prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}

#[test]
fn prototypes_are_taken_at_the_received_model() {
    let (_, shards, params) = setup(11);
    let shard = shards.iter().max_by_key(|s| s.len()).unwrap();
    let table = PrototypeTable::new(4);
    let report = local_train(&params, &table, shard, &local_cfg(false), SeedNode::new(5)).unwrap();
    let expected = compute_local_prototypes(&params, shard).unwrap();
    assert_eq!(report.local_prototypes, expected);
    assert_eq!(report.local_prototypes.keys().copied().collect::<BTreeSet<_>>(), shard.label_set());
}

#[test]
fn zero_lambda_matches_inactive_rebalancing() {
    let (_, shards, params) = setup(12);
    let shard = &shards[0];
    let mut table = PrototypeTable::new(4);
    let seed_report = local_train(&params, &table, shard, &local_cfg(false), SeedNode::new(1)).unwrap();
    table = table.update(&[seed_report], params.main_classifier.shape(), 1).unwrap();
    let mut zero = local_cfg(true);
    zero.lambda = 0.0;
    let a = local_train(&params, &table, shard, &zero, SeedNode::new(2)).unwrap();
    let b = local_train(&params, &table, shard, &local_cfg(false), SeedNode::new(2)).unwrap();
    assert_eq!(a.local_gradients.to_bytes(), b.local_gradients.to_bytes());
}

#[test]
fn rebalancing_changes_only_the_main_classifier_path() {
    let (_, shards, params) = setup(13);
    let shard = shards.iter().max_by_key(|s| s.len()).unwrap();
    let table = PrototypeTable::new(4)
        .update(
            &[local_train(&params, &PrototypeTable::new(4), shard, &local_cfg(false), SeedNode::new(1)).unwrap()],
            params.main_classifier.shape(),
            1,
        )
        .unwrap();
    let mut one_step = local_cfg(true);
    one_step.epochs = 1;
    one_step.batch_size = shard.len();
    let on = local_train(&params, &table, shard, &one_step, SeedNode::new(3)).unwrap();
    one_step.rebalance_active = false;
    let off = local_train(&params, &table, shard, &one_step, SeedNode::new(3)).unwrap();
    // After a single full-batch step only W differs.
    assert_ne!(on.local_gradients.main_classifier, off.local_gradients.main_classifier);
    assert_eq!(on.local_gradients.aux_classifier, off.local_gradients.aux_classifier);
    for (a, b) in on.local_gradients.encoder.iter().zip(&off.local_gradients.encoder) {
        assert_eq!(a, b);
    }
}

#[test]
fn client_update_depends_only_on_its_own_shard() {
    let (_, shards, params) = setup(14);
    let table = PrototypeTable::new(4);
    let alone = local_train(&params, &table, &shards[1], &local_cfg(false), SeedNode::new(9)).unwrap();
    let (_, other_shards, _) = setup(99);
    let _ = local_train(&params, &table, &other_shards[0], &local_cfg(false), SeedNode::new(9)).unwrap();
    let again = local_train(&params, &table, &shards[1], &local_cfg(false), SeedNode::new(9)).unwrap();
    assert_eq!(alone.local_gradients.to_bytes(), again.local_gradients.to_bytes());
}

#[test]
fn first_round_runs_without_rebalancing_then_enables_it() {
    let (ds, shards, params) = setup(15);
    let test = synth_gaussian_mixture(4, 6, &[10; 4], 0.8, SeedNode::new(15)).unwrap();
    let tail = tail_classes(ds.class_counts());
    let cfg = RoundConfig {
        procedure: ClientProcedure::RedGrape { rebalance: true },
        n_clients: 3,
        clients_per_round: 3,
        server_lr: 1.0,
        local: local_cfg(false),
    };
    let ctx = || EvalContext {
        test_set: &test,
        tail_classes: &tail,
    };
    let state = ServerState::new(params);
    let (state, first) = run_round(&state, &shards, &cfg, ctx(), SeedNode::new(1)).unwrap();
    assert!(!first.metrics.rebalance_active);
    assert_eq!(state.round, 1);
    let reported: BTreeSet<usize> = first
        .reports
        .iter()
        .flat_map(|r| r.local_prototypes.keys().copied())
        .collect();
    for c in 0..4 {
        assert_eq!(state.prototypes.prototype(c).is_some(), reported.contains(&c));
    }
    let (state, second) = run_round(&state, &shards, &cfg, ctx(), SeedNode::new(1)).unwrap();
    assert!(second.metrics.rebalance_active);
    assert_eq!(state.round, 2);
    assert_eq!(second.metrics.eval.round, 2);
}
