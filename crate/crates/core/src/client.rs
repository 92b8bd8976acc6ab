//! Local training with classifier re-balancing.
//!
//! Each local step updates the encoder `P` and the auxiliary classifier `Ŵ`
//! with the ordinary batch gradient of the summed-logit loss. The main
//! classifier `W` instead follows
//!
//! ```text
//! W ← W − η [g_local + λ · g_bal · ‖g_local‖ / ‖g_bal‖]
//! ```
//!
//! where `g_local` is the batch gradient for `W` and `g_bal` is the gradient
//! on a locally assembled class-balanced set: real samples for classes with at
//! least `T` local examples, global gradient prototypes for every other class.
//! Momentum is applied to the bracketed gradient.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{sample_balanced_subset, BalancedSubset, ClientShard};
use crate::error::{Error, Result};
use crate::nn::model::{encode_augmented, main_classifier_ce_gradient_from_repr};
use crate::nn::{
    backward, main_classifier_ce_gradient, sgd_step, DenseMatrix, LossKind, ParamSet,
};
use crate::protocol::{ClientRoundReport, PrototypeTable};
use crate::seed::SeedNode;

/// `‖g_bal‖` below this skips the re-balancing term.
pub const BALANCED_NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// Re-balance factor λ.
    pub lambda: f64,
    /// Per-class sample threshold `T`; `None` means infinite, so only global
    /// prototypes enter the balanced gradient.
    pub threshold: Option<usize>,
    pub rebalance_active: bool,
}

impl LocalTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::argument(format!("local learning rate must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::argument("batch size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::argument(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::argument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.threshold == Some(0) {
            return Err(Error::argument("threshold T must be >= 1"));
        }
        Ok(())
    }
}

/// The class-balanced gradient for `W`, with the classes it drew from.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBalancedGradient {
    pub matrix: DenseMatrix,
    pub real_classes: BTreeSet<usize>,
    pub proto_classes: BTreeSet<usize>,
}

/// `∇_W` of the class-mean cross-entropy (through `W` only) for every class
/// in the shard, evaluated at the received parameters.
pub fn compute_local_prototypes(
    params: &ParamSet,
    shard: &ClientShard,
) -> Result<BTreeMap<usize, DenseMatrix>> {
    shard
        .label_set()
        .into_iter()
        .map(|c| {
            let members: Vec<(&[f64], usize)> = shard
                .samples()
                .iter()
                .filter(|s| s.label == c)
                .map(|s| s.as_pair())
                .collect();
            main_classifier_ce_gradient(params, &members).map(|g| (c, g))
        })
        .collect()
}

/// `∇_W` of the mean cross-entropy over the `T` balanced samples of class `c`,
/// through `W` only, at the current local parameters.
pub fn real_class_gradient(
    params: &ParamSet,
    shard: &ClientShard,
    subset: &BalancedSubset,
    c: usize,
) -> Result<DenseMatrix> {
    let members = subset.samples(shard, c);
    if members.is_empty() {
        return Err(Error::argument(format!("class {c} is not in the balanced subset")));
    }
    let pairs: Vec<(&[f64], usize)> = members.iter().map(|s| s.as_pair()).collect();
    main_classifier_ce_gradient(params, &pairs)
}

/// `(Σ_{c∈L_bal} g_c + Σ_{c∉L_bal} g^pro_c) / |L|` over all `num_classes`
/// classes. A class with neither real data nor a prototype adds zero.
pub fn mixed_balanced_gradient(
    real_grads: &BTreeMap<usize, DenseMatrix>,
    prototypes: &PrototypeTable,
    num_classes: usize,
    shape: (usize, usize),
) -> Result<MixedBalancedGradient> {
    let mut matrix = DenseMatrix::zeros(shape.0, shape.1);
    let mut real_classes = BTreeSet::new();
    let mut proto_classes = BTreeSet::new();
    for c in 0..num_classes {
        if let Some(g) = real_grads.get(&c) {
            if g.shape() != shape {
                return Err(Error::config(format!("real gradient for class {c} has wrong shape")));
            }
            matrix.add_assign(g);
            real_classes.insert(c);
        } else {
            if let Some(p) = prototypes.prototype(c) {
                if p.shape() != shape {
                    return Err(Error::config(format!("prototype for class {c} has wrong shape")));
                }
                matrix.add_assign(p);
            }
            proto_classes.insert(c);
        }
    }
    matrix.scale(1.0 / num_classes as f64);
    Ok(MixedBalancedGradient {
        matrix,
        real_classes,
        proto_classes,
    })
}

/// The bracketed gradient `g_local + λ · g_bal · ‖g_local‖/‖g_bal‖`.
///
/// With `λ = 0` or `‖g_bal‖ <` [`BALANCED_NORM_GUARD`] this is `g_local`
/// unchanged.
pub fn rebalanced_w_gradient(g_local: &DenseMatrix, g_bal: &DenseMatrix, lambda: f64) -> DenseMatrix {
    let bal_norm = g_bal.frobenius_norm();
    if lambda == 0.0 || bal_norm < BALANCED_NORM_GUARD {
        return g_local.clone();
    }
    let mut out = g_local.clone();
    out.axpy(lambda * g_local.frobenius_norm() / bal_norm, g_bal);
    out
}

/// Plain-SGD form of the re-balanced update for `W`.
pub fn rebalanced_w_step(
    w: &DenseMatrix,
    g_local: &DenseMatrix,
    g_bal: &DenseMatrix,
    lr: f64,
    lambda: f64,
) -> Result<DenseMatrix> {
    if !(w.same_shape(g_local) && w.same_shape(g_bal)) {
        return Err(Error::config("W, g_local and g_bal shapes differ"));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::argument(format!("lambda must be >= 0, got {lambda}")));
    }
    let mut next = w.clone();
    next.axpy(-lr, &rebalanced_w_gradient(g_local, g_bal, lambda));
    Ok(next)
}

/// State the re-balancing path needs during local steps.
pub(crate) struct Rebalancer<'a> {
    pub prototypes: &'a PrototypeTable,
    pub subset: BalancedSubset,
    pub lambda: f64,
}

impl Rebalancer<'_> {
    fn balanced_gradient(&self, params: &ParamSet, shard: &ClientShard) -> Result<DenseMatrix> {
        let mut real = BTreeMap::new();
        for (c, idx) in self.subset.iter() {
            let reprs = idx
                .iter()
                .map(|&i| {
                    let s = &shard.samples()[i];
                    encode_augmented(params, &s.features).map(|h| (h, s.label))
                })
                .collect::<Result<Vec<_>>>()?;
            real.insert(c, main_classifier_ce_gradient_from_repr(&params.main_classifier, &reprs)?);
        }
        let shape = params.main_classifier.shape();
        Ok(mixed_balanced_gradient(&real, self.prototypes, params.num_classes(), shape)?.matrix)
    }
}

/// The local SGDM loop shared by every client procedure. Returns the trained
/// parameters and the mean batch loss over all steps.
pub(crate) fn run_local_sgd(
    global: &ParamSet,
    shard: &ClientShard,
    loss: &LossKind,
    cfg: &LocalTrainConfig,
    rebalancer: Option<&Rebalancer<'_>>,
    loader_seed: SeedNode,
) -> Result<(ParamSet, f64)> {
    cfg.validate()?;
    if shard.is_empty() {
        return Err(Error::argument(format!("client {} has no data", shard.client_id)));
    }
    let mut params = global.clone();
    let mut velocity = None;
    let mut rng = loader_seed.rng();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut loss_sum = 0.0;
    let mut steps = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize)> =
                chunk.iter().map(|&i| shard.samples()[i].as_pair()).collect();
            let (batch_loss, mut grads) = backward(&params, &batch, loss)?;
            if let Some(rb) = rebalancer {
                let g_bal = rb.balanced_gradient(&params, shard)?;
                grads.main_classifier =
                    rebalanced_w_gradient(&grads.main_classifier, &g_bal, rb.lambda);
            }
            let (next, v) = sgd_step(&params, &grads, cfg.lr, velocity.as_ref(), cfg.momentum)?;
            params = next;
            velocity = Some(v);
            loss_sum += batch_loss;
            steps += 1;
        }
    }
    let mean_loss = if steps == 0 { 0.0 } else { loss_sum / steps as f64 };
    Ok((params, mean_loss))
}

/// One client's round of two-stream training with classifier re-balancing.
///
/// Prototypes are computed on the received model before any local update.
/// When `cfg.rebalance_active` is false (the first round) `W` trains on its
/// batch gradient alone. `global` may lack `Ŵ`, which yields the
/// single-classifier ablation.
pub fn local_train(
    global: &ParamSet,
    prototypes: &PrototypeTable,
    shard: &ClientShard,
    cfg: &LocalTrainConfig,
    round_seed: SeedNode,
) -> Result<ClientRoundReport> {
    let local_prototypes = compute_local_prototypes(global, shard)?;
    let rebalancer = if cfg.rebalance_active && cfg.lambda > 0.0 {
        let subset = match cfg.threshold {
            Some(t) => sample_balanced_subset(shard, t, round_seed.child(1))?.0,
            None => BalancedSubset::default(),
        };
        Some(Rebalancer {
            prototypes,
            subset,
            lambda: cfg.lambda,
        })
    } else {
        None
    };
    let (trained, train_loss) = run_local_sgd(
        global,
        shard,
        &LossKind::CrossEntropy,
        cfg,
        rebalancer.as_ref(),
        round_seed.child(0),
    )?;
    Ok(ClientRoundReport {
        client_id: shard.client_id,
        local_gradients: global.sub(&trained),
        local_prototypes,
        sample_count: shard.len(),
        train_loss,
    })
}
