//! Round orchestration: participant sampling, server aggregation, the global
//! gradient-prototype table and a full simulated round.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::baseline_local_train;
use crate::client::{local_train, LocalTrainConfig};
use crate::data::{ClientShard, GlobalDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::nn::{DenseMatrix, Gradients, LossKind, ParamSet};
use crate::seed::{SeedNode, Stream};

/// What a client uploads at the end of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRoundReport {
    pub client_id: usize,
    /// `θ^{t−1} − θ^t_k`, including the `Ŵ` part when present.
    pub local_gradients: Gradients,
    /// Per-class `∇_W` at the received model; empty for baselines.
    pub local_prototypes: BTreeMap<usize, DenseMatrix>,
    pub sample_count: usize,
    /// Mean training loss over the client's local steps.
    pub train_loss: f64,
}

/// Uniformly samples `k` distinct clients out of `n`, returned ascending.
pub fn sample_participants(n_clients: usize, k: usize, round_seed: SeedNode) -> Result<Vec<usize>> {
    if k == 0 || k > n_clients {
        return Err(Error::argument(format!(
            "clients per round must be in 1..={n_clients}, got {k}"
        )));
    }
    if k == n_clients {
        return Ok((0..n_clients).collect());
    }
    let mut ids = index::sample(&mut round_seed.rng(), n_clients, k).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Data-size weights `|D_k| / Σ|D_i|` over the participating reports.
pub fn aggregation_weights(reports: &[ClientRoundReport]) -> Vec<f64> {
    let total: usize = reports.iter().map(|r| r.sample_count).sum();
    reports
        .iter()
        .map(|r| r.sample_count as f64 / total as f64)
        .collect()
}

/// `θ^t = θ^{t−1} − η_s Σ_k w_k g_k`, reducing in ascending client order.
pub fn aggregate(
    global: &ParamSet,
    reports: &[ClientRoundReport],
    server_lr: f64,
) -> Result<ParamSet> {
    if reports.is_empty() {
        return Err(Error::argument("aggregate needs at least one report"));
    }
    for r in reports {
        if !global.congruent(&r.local_gradients) {
            return Err(Error::Protocol {
                client: r.client_id,
                reason: "local gradient shapes do not match the global model".into(),
            });
        }
        if r.sample_count == 0 {
            return Err(Error::Protocol {
                client: r.client_id,
                reason: "report with zero samples".into(),
            });
        }
    }
    let mut order: Vec<&ClientRoundReport> = reports.iter().collect();
    order.sort_by_key(|r| r.client_id);
    let total: usize = order.iter().map(|r| r.sample_count).sum();
    let mut avg = global.zeros_like();
    for r in order {
        avg.axpy(r.sample_count as f64 / total as f64, &r.local_gradients);
    }
    let mut next = global.clone();
    next.axpy(-server_lr, &avg);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeEntry {
    pub prototype: DenseMatrix,
    pub last_updated_round: usize,
}

/// Global per-class gradient prototypes; a class stays absent until some
/// client first reports it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeTable {
    entries: Vec<Option<PrototypeEntry>>,
}

impl PrototypeTable {
    pub fn new(num_classes: usize) -> Self {
        PrototypeTable {
            entries: vec![None; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, c: usize) -> Option<&PrototypeEntry> {
        self.entries.get(c).and_then(Option::as_ref)
    }

    pub fn prototype(&self, c: usize) -> Option<&DenseMatrix> {
        self.get(c).map(|e| &e.prototype)
    }

    pub fn is_full(&self) -> bool {
        self.entries.iter().all(Option::is_some)
    }

    /// Averages this round's reported prototypes per class (unweighted mean
    /// over reporting clients, summed in ascending client order). Classes
    /// nobody reported keep their previous entry untouched.
    pub fn update(
        &self,
        reports: &[ClientRoundReport],
        shape: (usize, usize),
        round: usize,
    ) -> Result<PrototypeTable> {
        let mut order: Vec<&ClientRoundReport> = reports.iter().collect();
        order.sort_by_key(|r| r.client_id);
        let mut sums: BTreeMap<usize, (DenseMatrix, usize)> = BTreeMap::new();
        for r in order {
            for (&c, m) in &r.local_prototypes {
                if c >= self.entries.len() {
                    return Err(Error::Protocol {
                        client: r.client_id,
                        reason: format!("prototype for unknown class {c}"),
                    });
                }
                if m.shape() != shape {
                    return Err(Error::Protocol {
                        client: r.client_id,
                        reason: format!("prototype for class {c} has shape {:?}", m.shape()),
                    });
                }
                if !m.is_finite() {
                    return Err(Error::Protocol {
                        client: r.client_id,
                        reason: format!("non-finite prototype for class {c}"),
                    });
                }
                let slot = sums
                    .entry(c)
                    .or_insert_with(|| (DenseMatrix::zeros(shape.0, shape.1), 0));
                slot.0.add_assign(m);
                slot.1 += 1;
            }
        }
        let mut next = self.clone();
        for (c, (mut sum, n)) in sums {
            let n = n as f64;
            sum.values_mut().iter_mut().for_each(|v| *v /= n);
            next.entries[c] = Some(PrototypeEntry {
                prototype: sum,
                last_updated_round: round,
            });
        }
        Ok(next)
    }
}

/// Functional form of [`PrototypeTable::update`].
pub fn update_prototypes(
    table: &PrototypeTable,
    reports: &[ClientRoundReport],
    shape: (usize, usize),
    round: usize,
) -> Result<PrototypeTable> {
    table.update(reports, shape, round)
}

/// Which local procedure clients run.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientProcedure {
    /// Two-stream training with classifier re-balancing. `rebalance` false
    /// keeps the W-update plain in every round.
    RedGrape { rebalance: bool },
    /// Single-classifier SGDM on the given loss.
    Baseline(LossKind),
}

#[derive(Debug, Clone)]
pub struct RoundConfig {
    pub procedure: ClientProcedure,
    pub n_clients: usize,
    pub clients_per_round: usize,
    pub server_lr: f64,
    pub local: LocalTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub params: ParamSet,
    pub prototypes: PrototypeTable,
    /// Index of the last completed round; 0 before training.
    pub round: usize,
}

impl ServerState {
    pub fn new(params: ParamSet) -> Self {
        let c = params.num_classes();
        ServerState {
            params,
            prototypes: PrototypeTable::new(c),
            round: 0,
        }
    }
}

/// Test data and the tail classes used to evaluate the global model.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub test_set: &'a GlobalDataset,
    pub tail_classes: &'a BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub participants: Vec<usize>,
    /// Sampled clients that had no data and sent nothing.
    pub skipped: Vec<usize>,
    pub rebalance_active: bool,
    pub train_loss: f64,
    pub eval: EvalReport,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub metrics: RoundMetrics,
    pub reports: Vec<ClientRoundReport>,
}

/// One communication round: sample, broadcast, train locally, aggregate,
/// refresh prototypes, evaluate.
pub fn run_round(
    state: &ServerState,
    shards: &[ClientShard],
    cfg: &RoundConfig,
    eval_ctx: EvalContext<'_>,
    seed: SeedNode,
) -> Result<(ServerState, RoundOutcome)> {
    let round = state.round + 1;
    if shards.len() != cfg.n_clients {
        return Err(Error::config(format!(
            "{} shards for {} clients",
            shards.len(),
            cfg.n_clients
        )));
    }
    let participants = sample_participants(
        cfg.n_clients,
        cfg.clients_per_round,
        seed.stream(Stream::Participants).child(round as u64),
    )?;
    let (active, skipped): (Vec<usize>, Vec<usize>) =
        participants.iter().partition(|&&k| !shards[k].is_empty());
    for k in &skipped {
        log::warn!("round {round}: client {k} has no local data, skipped");
    }

    // Re-balancing starts from the second round.
    let rebalance_active = matches!(cfg.procedure, ClientProcedure::RedGrape { rebalance: true })
        && round >= 2;
    let local_cfg = LocalTrainConfig {
        rebalance_active,
        ..cfg.local.clone()
    };

    let reports = active
        .par_iter()
        .map(|&k| {
            let client_seed = seed.client_round(round, k);
            match &cfg.procedure {
                ClientProcedure::RedGrape { .. } => local_train(
                    &state.params,
                    &state.prototypes,
                    &shards[k],
                    &local_cfg,
                    client_seed,
                ),
                ClientProcedure::Baseline(loss) => {
                    baseline_local_train(&state.params, &shards[k], loss, &local_cfg, client_seed)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let (params, prototypes) = if reports.is_empty() {
        (state.params.clone(), state.prototypes.clone())
    } else {
        (
            aggregate(&state.params, &reports, cfg.server_lr)?,
            state
                .prototypes
                .update(&reports, state.params.main_classifier.shape(), round)?,
        )
    };
    let next = ServerState {
        params,
        prototypes,
        round,
    };
    let eval = evaluate(&next.params, eval_ctx.test_set, eval_ctx.tail_classes, round)?;
    let train_loss = if reports.is_empty() {
        0.0
    } else {
        reports.iter().map(|r| r.train_loss).sum::<f64>() / reports.len() as f64
    };
    let metrics = RoundMetrics {
        round,
        participants,
        skipped,
        rebalance_active,
        train_loss,
        eval,
    };
    Ok((next, RoundOutcome { metrics, reports }))
}
