//! Deterministic simulator for federated learning on long-tailed, non-i.i.d.
//! data.
//!
//! The main procedure trains a two-stream classifier head: the auxiliary
//! classifier `Ŵ` absorbs the long-tailed fit while the main classifier `W`
//! is re-balanced at every local step with a gradient computed on a locally
//! balanced set. That set mixes real local samples for well-represented
//! classes with server-averaged gradient prototypes for the rest. Only `W` is
//! used at inference. FedAvg with cross-entropy, Fed-Focal and Ratio Loss are
//! provided as baselines sharing the same optimizer and data pipeline.
//!
//! Every random draw descends from one experiment seed (see [`seed`]), so a
//! `(config, seed)` pair reproduces its metrics byte for byte.

pub mod baselines;
pub mod client;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod nn;
pub mod protocol;
pub mod seed;

pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, Method};
pub use nn::{DenseMatrix, Gradients, LossKind, ParamSet};
pub use protocol::{ClientRoundReport, PrototypeTable};
pub use seed::SeedNode;
