use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetKind, ExperimentConfig, ImbalanceKind};
use crate::data::{
    binary_imbalance_counts, dirichlet_partition, longtail_counts, read_csv_samples,
    shard_manifest, ClientShard, GaussianMixture, GlobalDataset, LabeledSample,
};
use crate::error::{Error, Result};
use crate::eval::{last_k_average, tail_classes, write_curve_csv, EvalReport};
use crate::nn::ModelSpec;
use crate::protocol::{
    run_round, ClientProcedure, EvalContext, RoundConfig, RoundOutcome, ServerState,
};
use crate::seed::{SeedNode, Stream};

/// One seed's federation: data, shards, server state.
pub struct Simulation {
    seed: u64,
    root: SeedNode,
    train: GlobalDataset,
    test: GlobalDataset,
    shards: Vec<ClientShard>,
    tail: BTreeSet<usize>,
    round_cfg: RoundConfig,
    state: ServerState,
}

fn target_counts(cfg: &ExperimentConfig, root: SeedNode) -> Result<Vec<usize>> {
    match cfg.imbalance {
        ImbalanceKind::Longtail => longtail_counts(cfg.n0, cfg.ir, cfg.num_classes),
        ImbalanceKind::Binary => {
            let tails: BTreeSet<usize> = match &cfg.tail_classes {
                Some(t) => t.iter().copied().collect(),
                None => index::sample(
                    &mut root.stream(Stream::TailChoice).rng(),
                    cfg.num_classes,
                    cfg.n_tail_classes,
                )
                .into_iter()
                .collect(),
            };
            binary_imbalance_counts(cfg.n0, cfg.ir, cfg.num_classes, &tails)
        }
    }
}

/// Keeps at most `counts[c]` samples of every class, in a seeded order.
fn subsample(
    samples: Vec<LabeledSample>,
    counts: &[usize],
    num_classes: usize,
    seed: SeedNode,
) -> Result<GlobalDataset> {
    use rand::seq::SliceRandom;
    let mut samples = samples;
    samples.shuffle(&mut seed.rng());
    let mut kept = vec![0usize; num_classes];
    let mut out = Vec::new();
    for s in samples {
        if s.label >= num_classes {
            return Err(Error::Config(format!(
                "CSV label {} exceeds num_classes = {num_classes}",
                s.label
            )));
        }
        if kept[s.label] < counts[s.label] {
            kept[s.label] += 1;
            out.push(s);
        }
    }
    GlobalDataset::new(out, num_classes)
}

fn build_datasets(cfg: &ExperimentConfig, root: SeedNode) -> Result<(GlobalDataset, GlobalDataset)> {
    let counts = target_counts(cfg, root)?;
    match cfg.dataset {
        DatasetKind::Synthetic => {
            let data_seed = root.stream(Stream::Dataset);
            let mixture = GaussianMixture::new(cfg.num_classes, cfg.dim, cfg.sigma, data_seed.child(0))?;
            let train = mixture.sample(&counts, data_seed.child(1))?;
            let test = mixture.sample(
                &vec![cfg.test_per_class; cfg.num_classes],
                root.stream(Stream::TestSet),
            )?;
            Ok((train, test))
        }
        DatasetKind::Csv => {
            let train_path = cfg.csv_train.as_deref().expect("validated");
            let test_path = cfg.csv_test.as_deref().expect("validated");
            let train = subsample(
                read_csv_samples(train_path)?,
                &counts,
                cfg.num_classes,
                root.stream(Stream::Dataset),
            )?;
            let test = GlobalDataset::new(read_csv_samples(test_path)?, cfg.num_classes)?;
            if train.feature_dim() != test.feature_dim() {
                return Err(Error::Config("train and test CSV feature dimensions differ".into()));
            }
            Ok((train, test))
        }
    }
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let root = SeedNode::new(seed);
        let (train, test) = build_datasets(cfg, root)?;
        let input_dim = train
            .feature_dim()
            .ok_or_else(|| Error::Config("training set is empty".into()))?;
        let shards = dirichlet_partition(&train, cfg.n_clients, cfg.alpha, root.stream(Stream::Partition))?;
        let tail = tail_classes(train.class_counts());
        let spec = ModelSpec {
            input_dim,
            layer_widths: cfg.encoder_layers.clone(),
            num_classes: cfg.num_classes,
            aux_classifier: cfg.uses_aux_classifier(),
            classifier_bias: cfg.classifier_bias,
        };
        let params = spec.init(root.stream(Stream::ModelInit))?;
        let procedure = match cfg.baseline_kind() {
            None => ClientProcedure::RedGrape {
                rebalance: !cfg.disable_rebalance,
            },
            Some(kind) => ClientProcedure::Baseline(kind.loss_kind(train.class_counts())?),
        };
        let round_cfg = RoundConfig {
            procedure,
            n_clients: cfg.n_clients,
            clients_per_round: cfg.clients_per_round,
            server_lr: cfg.server_lr,
            local: cfg.local_config(false),
        };
        Ok(Simulation {
            seed,
            root,
            train,
            test,
            shards,
            tail,
            round_cfg,
            state: ServerState::new(params),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn train_set(&self) -> &GlobalDataset {
        &self.train
    }

    pub fn test_set(&self) -> &GlobalDataset {
        &self.test
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    pub fn tail_classes(&self) -> &BTreeSet<usize> {
        &self.tail
    }

    pub fn state(&self) -> &ServerState {
        &self.state
    }

    /// Runs the next round.
    pub fn step(&mut self) -> Result<RoundOutcome> {
        let ctx = EvalContext {
            test_set: &self.test,
            tail_classes: &self.tail,
        };
        let (next, outcome) = run_round(&self.state, &self.shards, &self.round_cfg, ctx, self.root)?;
        self.state = next;
        Ok(outcome)
    }
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub round: usize,
    pub method: String,
    pub seed: u64,
    pub participants: Vec<usize>,
    pub skipped: Vec<usize>,
    pub rebalance_active: bool,
    pub train_loss: f64,
    pub test_loss: f64,
    pub overall_accuracy: f64,
    pub tail_accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub last_k_overall: f64,
    pub last_k_tail: f64,
    pub tail_classes: Vec<usize>,
    pub train_class_counts: Vec<usize>,
    pub realized_ir: f64,
    pub evals: Vec<EvalReport>,
}

/// Cross-seed summary written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub method: String,
    pub last_k: usize,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedSummary>,
    pub overall_mean: f64,
    /// Population standard deviation across seeds.
    pub overall_std: f64,
    pub tail_mean: f64,
    pub tail_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub overall: f64,
    pub tail: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    seeds: &'a [u64],
    code_version: &'static str,
    wall_time_secs: f64,
    per_seed: Vec<ManifestSeed<'a>>,
}

#[derive(Debug, Clone, Serialize)]
struct ManifestSeed<'a> {
    seed: u64,
    train_class_counts: &'a [usize],
    realized_ir: f64,
    tail_classes: &'a [usize],
}

pub(crate) fn mean_and_population_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Runs one seed, streaming `metrics.jsonl` into `dir` when given.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: Option<&Path>) -> Result<SeedResult> {
    let mut sim = Simulation::new(cfg, seed)?;
    let mut writer = match dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            write_json(&d.join("shards.json"), &shard_manifest(sim.shards()))?;
            let path = d.join("metrics.jsonl");
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            Some((path, BufWriter::new(file)))
        }
        None => None,
    };
    let mut evals = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        let outcome = sim.step()?;
        let m = outcome.metrics;
        if m.round % 10 == 0 || m.round == cfg.rounds {
            log::info!(
                "{} seed {seed} round {}: acc {:.4} tail {:.4}",
                cfg.method.name(),
                m.round,
                m.eval.overall_accuracy,
                m.eval.tail_accuracy
            );
        }
        if let Some((path, w)) = writer.as_mut() {
            let record = MetricsRecord {
                round: m.round,
                method: cfg.method.name().to_string(),
                seed,
                participants: m.participants.clone(),
                skipped: m.skipped.clone(),
                rebalance_active: m.rebalance_active,
                train_loss: m.train_loss,
                test_loss: m.eval.mean_loss,
                overall_accuracy: m.eval.overall_accuracy,
                tail_accuracy: m.eval.tail_accuracy,
                per_class_accuracy: m.eval.per_class_accuracy.clone(),
            };
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n").map_err(|e| Error::io(&*path, e))?;
        }
        evals.push(m.eval);
    }
    if let Some((path, mut w)) = writer {
        w.flush().map_err(|e| Error::io(&path, e))?;
        write_curve_csv(&path.with_file_name("curve.csv"), &evals)?;
    }
    let summary = last_k_average(&evals, cfg.last_k)?;
    Ok(SeedResult {
        seed,
        last_k_overall: summary.overall_accuracy,
        last_k_tail: summary.tail_accuracy,
        tail_classes: sim.tail_classes().iter().copied().collect(),
        train_class_counts: sim.train_set().class_counts().to_vec(),
        realized_ir: sim.train_set().ir(),
        evals,
    })
}

pub fn summarize(cfg: &ExperimentConfig, results: &[SeedResult]) -> ExperimentSummary {
    let overall: Vec<f64> = results.iter().map(|r| r.last_k_overall).collect();
    let tail: Vec<f64> = results.iter().map(|r| r.last_k_tail).collect();
    let (overall_mean, overall_std) = mean_and_population_std(&overall);
    let (tail_mean, tail_std) = mean_and_population_std(&tail);
    ExperimentSummary {
        method: cfg.method.name().to_string(),
        last_k: cfg.last_k,
        seeds: results.iter().map(|r| r.seed).collect(),
        per_seed: results
            .iter()
            .map(|r| SeedSummary {
                seed: r.seed,
                overall: r.last_k_overall,
                tail: r.last_k_tail,
            })
            .collect(),
        overall_mean,
        overall_std,
        tail_mean,
        tail_std,
    }
}

/// Runs every seed without touching the filesystem.
pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<(ExperimentSummary, Vec<SeedResult>)> {
    cfg.validate()?;
    let results = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s, None))
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize(cfg, &results), results))
}

/// Runs all seeds and writes `seed_<s>/{metrics.jsonl,curve.csv,shards.json}`,
/// `summary.json` and `manifest.json` under `cfg.output_dir`. If the run
/// fails and the directory did not exist beforehand, it is removed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    let existed = out.exists();
    let result = write_experiment(cfg, &out);
    if result.is_err() && !existed {
        let _ = fs::remove_dir_all(&out);
    }
    result
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

fn write_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary> {
    let start = Instant::now();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let results = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s, Some(&seed_dir(out, s))))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(cfg, &results);
    write_json(&out.join("summary.json"), &summary)?;
    let manifest = Manifest {
        config: cfg,
        seeds: &cfg.seeds,
        code_version: env!("CARGO_PKG_VERSION"),
        wall_time_secs: start.elapsed().as_secs_f64(),
        per_seed: results
            .iter()
            .map(|r| ManifestSeed {
                seed: r.seed,
                train_class_counts: &r.train_class_counts,
                realized_ir: r.realized_ir,
                tail_classes: &r.tail_classes,
            })
            .collect(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(summary)
}
