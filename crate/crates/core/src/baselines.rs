//! Single-classifier reference procedures: FedAvg with cross-entropy,
//! Fed-Focal and Ratio Loss.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::client::{run_local_sgd, LocalTrainConfig};
use crate::data::ClientShard;
use crate::error::{Error, Result};
use crate::nn::{LossKind, ParamSet};
use crate::protocol::ClientRoundReport;
use crate::seed::SeedNode;

/// Where Ratio Loss gets its per-class ratio vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioSource {
    /// `max_j n_j / n_c` from the true global class counts.
    OracleGlobalCounts,
    Supplied(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    FedAvgCe,
    FedFocal { gamma: f64 },
    RatioLoss { alpha: f64, beta: f64, source: RatioSource },
}

impl BaselineKind {
    /// The loss clients train with, resolving the ratio vector server-side.
    pub fn loss_kind(&self, global_counts: &[usize]) -> Result<LossKind> {
        let kind = match self {
            BaselineKind::FedAvgCe => LossKind::CrossEntropy,
            BaselineKind::FedFocal { gamma } => LossKind::Focal { gamma: *gamma },
            BaselineKind::RatioLoss {
                alpha,
                beta,
                source,
            } => LossKind::Ratio {
                alpha: *alpha,
                beta: *beta,
                ratio: match source {
                    RatioSource::OracleGlobalCounts => ratio_vector_oracle(global_counts)?,
                    RatioSource::Supplied(v) => v.clone(),
                },
            },
        };
        kind.validate(global_counts.len())?;
        Ok(kind)
    }
}

/// `R[c] = max_j n_j / n_c`: 1 for the largest class, growing toward the tail.
pub fn ratio_vector_oracle(global_counts: &[usize]) -> Result<Vec<f64>> {
    if let Some(c) = global_counts.iter().position(|&n| n == 0) {
        return Err(Error::argument(format!("class {c} has no samples")));
    }
    let max = global_counts.iter().copied().max().unwrap_or(1) as f64;
    Ok(global_counts.iter().map(|&n| max / n as f64).collect())
}

/// Local SGDM on `loss` with a single classifier. Reports carry no
/// prototypes.
pub fn baseline_local_train(
    global: &ParamSet,
    shard: &ClientShard,
    loss: &LossKind,
    cfg: &LocalTrainConfig,
    round_seed: SeedNode,
) -> Result<ClientRoundReport> {
    if global.has_aux() {
        return Err(Error::config("baseline methods use a single classifier"));
    }
    let (trained, train_loss) =
        run_local_sgd(global, shard, loss, cfg, None, round_seed.child(0))?;
    Ok(ClientRoundReport {
        client_id: shard.client_id,
        local_gradients: global.sub(&trained),
        local_prototypes: BTreeMap::new(),
        sample_count: shard.len(),
        train_loss,
    })
}
