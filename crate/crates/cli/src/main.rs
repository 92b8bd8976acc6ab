use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use redgrape_core::experiment::{run_experiment, run_sweep, DatasetKind, ImbalanceKind, SweepAxis};
use redgrape_core::{Error, ExperimentConfig, Method};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "redgrape", version, about = "Federated long-tailed learning simulator", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment over every configured seed.
    Run(Overrides),
    /// Run one experiment per value of a single knob.
    Sweep {
        /// lambda, threshold_t, ir or alpha
        #[arg(long)]
        axis: String,
        /// Comma-separated values; threshold_t accepts `inf`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the effective configuration as TOML.
    ShowConfig(Overrides),
}

/// Config file plus per-field overrides; flags win over the file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML config file.
    #[arg(long, short)]
    config: Option<PathBuf>,

    /// Relative output directories are resolved against this root.
    #[arg(long, env = "REDGRAPE_OUTPUT_ROOT")]
    output_root: Option<PathBuf>,

    #[arg(long)]
    method: Option<String>,
    /// synthetic or csv
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    csv_train: Option<PathBuf>,
    #[arg(long)]
    csv_test: Option<PathBuf>,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    test_per_class: Option<usize>,
    /// longtail or binary
    #[arg(long)]
    imbalance: Option<String>,
    #[arg(long, value_delimiter = ',')]
    tail_classes: Option<Vec<usize>>,
    #[arg(long)]
    n_tail_classes: Option<usize>,
    #[arg(long)]
    ir: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_clients: Option<usize>,
    #[arg(long)]
    clients_per_round: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    local_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    local_lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    server_lr: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    encoder_layers: Option<Vec<usize>>,
    #[arg(long)]
    classifier_bias: bool,
    #[arg(long = "lambda")]
    lambda: Option<f64>,
    #[arg(long)]
    threshold_t: Option<usize>,
    /// Infinite threshold: re-balance with global prototypes only.
    #[arg(long)]
    prototypes_only: bool,
    #[arg(long)]
    disable_aux_classifier: bool,
    #[arg(long)]
    disable_rebalance: bool,
    #[arg(long)]
    focal_gamma: Option<f64>,
    #[arg(long)]
    ratio_alpha: Option<f64>,
    #[arg(long)]
    ratio_beta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    ratio_vector: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    last_k: Option<usize>,
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
}

fn parse_dataset(s: &str) -> Result<DatasetKind, Error> {
    match s {
        "synthetic" => Ok(DatasetKind::Synthetic),
        "csv" => Ok(DatasetKind::Csv),
        other => Err(Error::Config(format!("`dataset`: unknown kind {other:?}"))),
    }
}

fn parse_imbalance(s: &str) -> Result<ImbalanceKind, Error> {
    match s {
        "longtail" => Ok(ImbalanceKind::Longtail),
        "binary" => Ok(ImbalanceKind::Binary),
        other => Err(Error::Config(format!("`imbalance`: unknown kind {other:?}"))),
    }
}

macro_rules! override_fields {
    ($cfg:ident, $o:ident; $($field:ident),* $(,)?) => {
        $( if let Some(v) = $o.$field.clone() { $cfg.$field = v; } )*
    };
}

impl Overrides {
    fn build(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_toml_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = &self.method {
            cfg.method = Method::parse(m).map_err(|e| Error::Config(format!("`method`: {e}")))?;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = parse_dataset(d)?;
        }
        if let Some(i) = &self.imbalance {
            cfg.imbalance = parse_imbalance(i)?;
        }
        let o = self;
        override_fields!(cfg, o;
            num_classes, dim, n0, sigma, test_per_class, n_tail_classes, ir, alpha,
            n_clients, clients_per_round, rounds, local_epochs, batch_size, local_lr,
            momentum, server_lr, encoder_layers, lambda, threshold_t, focal_gamma,
            ratio_alpha, ratio_beta, seeds, last_k, output_dir,
        );
        if self.csv_train.is_some() {
            cfg.csv_train = self.csv_train.clone();
        }
        if self.csv_test.is_some() {
            cfg.csv_test = self.csv_test.clone();
        }
        if self.tail_classes.is_some() {
            cfg.tail_classes = self.tail_classes.clone();
        }
        if self.ratio_vector.is_some() {
            cfg.ratio_vector = self.ratio_vector.clone();
        }
        cfg.classifier_bias |= self.classifier_bias;
        cfg.prototypes_only |= self.prototypes_only;
        cfg.disable_aux_classifier |= self.disable_aux_classifier;
        cfg.disable_rebalance |= self.disable_rebalance;
        if let Some(root) = &self.output_root {
            if cfg.output_dir.is_relative() {
                cfg.output_dir = root.join(&cfg.output_dir);
            }
        }

        if cfg.method != Method::Redgrape {
            let ignored: Vec<&str> = [
                ("--lambda", self.lambda.is_some()),
                ("--threshold-t", self.threshold_t.is_some()),
                ("--prototypes-only", self.prototypes_only),
                ("--disable-aux-classifier", self.disable_aux_classifier),
                ("--disable-rebalance", self.disable_rebalance),
            ]
            .into_iter()
            .filter_map(|(flag, set)| set.then_some(flag))
            .collect();
            if !ignored.is_empty() {
                log::warn!(
                    "{} ignored for baseline method {}",
                    ignored.join(", "),
                    cfg.method.name()
                );
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fail(code: u8, err: &dyn std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::ShowConfig(o) => match o.build() {
            Ok(cfg) => {
                print!("{}", cfg.to_toml_string());
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_CONFIG, &e),
        },
        Command::Run(o) => {
            let cfg = match o.build() {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, &e),
            };
            match run_experiment(&cfg) {
                Ok(s) => {
                    println!(
                        "{}: last-{} overall {:.4} ± {:.4}, tail {:.4} ± {:.4} ({} seeds) -> {}",
                        s.method,
                        s.last_k,
                        s.overall_mean,
                        s.overall_std,
                        s.tail_mean,
                        s.tail_std,
                        s.seeds.len(),
                        cfg.output_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_RUNTIME, &e),
            }
        }
        Command::Sweep {
            axis,
            values,
            overrides,
        } => {
            let (cfg, axis) = match overrides
                .build()
                .and_then(|c| axis.parse::<SweepAxis>().map(|a| (c, a)))
            {
                Ok(x) => x,
                Err(e) => return fail(EXIT_CONFIG, &e),
            };
            match run_sweep(&cfg, axis, &values) {
                Ok(points) => {
                    for p in points {
                        println!(
                            "{axis}={}: overall {:.4} ± {:.4}, tail {:.4} ± {:.4}",
                            p.value,
                            p.summary.overall_mean,
                            p.summary.overall_std,
                            p.summary.tail_mean,
                            p.summary.tail_std
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e @ Error::Config(_)) => fail(EXIT_CONFIG, &e),
                Err(e) => fail(EXIT_RUNTIME, &e),
            }
        }
    }
}
