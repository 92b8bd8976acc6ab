use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, RatioSource};
use crate::client::LocalTrainConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Redgrape,
    FedavgCe,
    FedFocal,
    RatioLoss,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Redgrape => "redgrape",
            Method::FedavgCe => "fedavg_ce",
            Method::FedFocal => "fed_focal",
            Method::RatioLoss => "ratio_loss",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "redgrape" => Ok(Method::Redgrape),
            "fedavg_ce" => Ok(Method::FedavgCe),
            "fed_focal" => Ok(Method::FedFocal),
            "ratio_loss" => Ok(Method::RatioLoss),
            other => Err(Error::argument(format!(
                "unknown method {other:?} (expected redgrape, fedavg_ce, fed_focal or ratio_loss)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Gaussian mixture with unit-norm class means.
    Synthetic,
    /// Pre-featurized `label,f0,f1,...` files.
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImbalanceKind {
    /// Exponential decay from `n0` down to `n0 / ir`.
    Longtail,
    /// `n0` for head classes, `n0 / ir` for a set of tail classes.
    Binary,
}

/// Every knob of an experiment. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,

    pub dataset: DatasetKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_test: Option<PathBuf>,
    pub num_classes: usize,
    pub dim: usize,
    pub n0: usize,
    pub sigma: f64,
    pub test_per_class: usize,
    pub imbalance: ImbalanceKind,
    /// Explicit tail classes for binary imbalance; drawn at random if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_classes: Option<Vec<usize>>,
    pub n_tail_classes: usize,
    pub ir: f64,

    pub alpha: f64,
    pub n_clients: usize,
    pub clients_per_round: usize,
    pub rounds: usize,

    pub local_epochs: usize,
    pub batch_size: usize,
    pub local_lr: f64,
    pub momentum: f64,
    pub server_lr: f64,
    pub encoder_layers: Vec<usize>,
    pub classifier_bias: bool,

    pub lambda: f64,
    pub threshold_t: usize,
    /// Infinite threshold: the balanced gradient uses global prototypes only.
    pub prototypes_only: bool,
    pub disable_aux_classifier: bool,
    pub disable_rebalance: bool,

    pub focal_gamma: f64,
    pub ratio_alpha: f64,
    pub ratio_beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_vector: Option<Vec<f64>>,

    pub seeds: Vec<u64>,
    /// Rounds averaged for the headline accuracy.
    pub last_k: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::Redgrape,
            dataset: DatasetKind::Synthetic,
            csv_train: None,
            csv_test: None,
            num_classes: 10,
            dim: 32,
            n0: 1000,
            sigma: crate::data::DEFAULT_SIGMA,
            test_per_class: 100,
            imbalance: ImbalanceKind::Longtail,
            tail_classes: None,
            n_tail_classes: 3,
            ir: 100.0,
            alpha: 1.0,
            n_clients: 10,
            clients_per_round: 10,
            rounds: 100,
            local_epochs: 5,
            batch_size: 64,
            local_lr: 0.01,
            momentum: 0.9,
            server_lr: 1.0,
            encoder_layers: vec![64, 32],
            classifier_bias: false,
            lambda: 0.1,
            threshold_t: 8,
            prototypes_only: false,
            disable_aux_classifier: false,
            disable_rebalance: false,
            focal_gamma: 2.0,
            ratio_alpha: 1.0,
            ratio_beta: 0.1,
            ratio_vector: None,
            seeds: vec![0, 1, 2],
            last_k: 10,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key}`: {msg}"))
}

impl ExperimentConfig {
    /// Parses a TOML config; absent keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(bad("num_classes", "must be >= 2"));
        }
        match self.dataset {
            DatasetKind::Synthetic => {
                if self.dim < 2 {
                    return Err(bad("dim", "must be >= 2"));
                }
                if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
                    return Err(bad("sigma", "must be finite and >= 0"));
                }
                if self.test_per_class == 0 {
                    return Err(bad("test_per_class", "must be >= 1"));
                }
            }
            DatasetKind::Csv => {
                if self.csv_train.is_none() {
                    return Err(bad("csv_train", "required when dataset = \"csv\""));
                }
                if self.csv_test.is_none() {
                    return Err(bad("csv_test", "required when dataset = \"csv\""));
                }
            }
        }
        if self.n0 == 0 {
            return Err(bad("n0", "must be >= 1"));
        }
        if !(self.ir >= 1.0 && self.ir.is_finite()) {
            return Err(bad("ir", format!("must be >= 1, got {}", self.ir)));
        }
        if self.imbalance == ImbalanceKind::Binary {
            match &self.tail_classes {
                Some(t) => {
                    if t.is_empty() || t.len() >= self.num_classes {
                        return Err(bad("tail_classes", "must be a nonempty proper subset"));
                    }
                    if t.iter().any(|&c| c >= self.num_classes) {
                        return Err(bad("tail_classes", "class index out of range"));
                    }
                }
                None => {
                    if self.n_tail_classes == 0 || self.n_tail_classes >= self.num_classes {
                        return Err(bad("n_tail_classes", "must be in 1..num_classes"));
                    }
                }
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(bad("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        if self.n_clients == 0 {
            return Err(bad("n_clients", "must be >= 1"));
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.n_clients {
            return Err(bad(
                "clients_per_round",
                format!("must be in 1..={}, got {}", self.n_clients, self.clients_per_round),
            ));
        }
        if self.rounds == 0 {
            return Err(bad("rounds", "must be >= 1"));
        }
        if self.last_k == 0 || self.last_k > self.rounds {
            return Err(bad("last_k", format!("must be in 1..={}", self.rounds)));
        }
        if !(self.server_lr > 0.0 && self.server_lr.is_finite()) {
            return Err(bad("server_lr", "must be > 0"));
        }
        if self.encoder_layers.contains(&0) {
            return Err(bad("encoder_layers", "widths must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "at least one seed is required"));
        }
        let mut uniq = self.seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != self.seeds.len() {
            return Err(bad("seeds", "duplicate seed"));
        }
        if !(self.focal_gamma >= 0.0 && self.focal_gamma.is_finite()) {
            return Err(bad("focal_gamma", "must be finite and >= 0"));
        }
        if let Some(r) = &self.ratio_vector {
            if r.len() != self.num_classes {
                return Err(bad("ratio_vector", "length must equal num_classes"));
            }
            if r.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(bad("ratio_vector", "entries must be finite and >= 0"));
            }
        }
        self.local_config(false)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn local_config(&self, rebalance_active: bool) -> LocalTrainConfig {
        LocalTrainConfig {
            lr: self.local_lr,
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            momentum: self.momentum,
            lambda: self.lambda,
            threshold: (!self.prototypes_only).then_some(self.threshold_t),
            rebalance_active,
        }
    }

    /// The baseline family for non-RedGrape methods.
    pub fn baseline_kind(&self) -> Option<BaselineKind> {
        match self.method {
            Method::Redgrape => None,
            Method::FedavgCe => Some(BaselineKind::FedAvgCe),
            Method::FedFocal => Some(BaselineKind::FedFocal {
                gamma: self.focal_gamma,
            }),
            Method::RatioLoss => Some(BaselineKind::RatioLoss {
                alpha: self.ratio_alpha,
                beta: self.ratio_beta,
                source: match &self.ratio_vector {
                    Some(v) => RatioSource::Supplied(v.clone()),
                    None => RatioSource::OracleGlobalCounts,
                },
            }),
        }
    }

    pub fn uses_aux_classifier(&self) -> bool {
        self.method == Method::Redgrape && !self.disable_aux_classifier
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_match_desk_profile() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.lambda, 0.1);
        assert_eq!(cfg.local_epochs, 5);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.seeds.len(), 3);
        assert_eq!(cfg.threshold_t, 8);
    }

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        let partial = ExperimentConfig::from_toml_str("method = \"fed_focal\"\nrounds = 7\n").unwrap();
        assert_eq!(partial.method, Method::FedFocal);
        assert_eq!(partial.rounds, 7);
        assert_eq!(partial.n_clients, 10);
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let err = ExperimentConfig::from_toml_str("rounds = 3\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn validation_names_the_key() {
        let cfg = ExperimentConfig {
            clients_per_round: 11,
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("clients_per_round"));
        let cfg = ExperimentConfig {
            seeds: vec![],
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("seeds"));
        let cfg = ExperimentConfig {
            dataset: DatasetKind::Csv,
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("csv_train"));
        let cfg = ExperimentConfig {
            lambda: -1.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
