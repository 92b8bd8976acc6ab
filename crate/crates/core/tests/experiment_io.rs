use std::fs;

use redgrape_core::data::{read_csv_samples, write_csv_samples, LabeledSample};
use redgrape_core::experiment::{
    run_experiment, run_sweep, seed_dir, DatasetKind, Method, MetricsRecord, SweepAxis,
};
use redgrape_core::{Error, ExperimentConfig};

fn tiny(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        num_classes: 4,
        dim: 6,
        n0: 60,
        ir: 5.0,
        test_per_class: 10,
        n_clients: 3,
        clients_per_round: 2,
        rounds: 3,
        encoder_layers: vec![8],
        local_epochs: 1,
        batch_size: 16,
        threshold_t: 2,
        seeds: vec![0, 1],
        last_k: 2,
        output_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn run_writes_per_seed_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir.path().join("run"));
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.seeds, vec![0, 1]);
    assert!(cfg.output_dir.join("manifest.json").is_file());
    for seed in [0, 1] {
        let sd = seed_dir(&cfg.output_dir, seed);
        let lines: Vec<MetricsRecord> = fs::read_to_string(sd.join("metrics.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines.iter().map(|r| r.round).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(!lines[0].rebalance_active && lines[1].rebalance_active);
        assert_eq!(lines[0].participants.len(), 2);
        let curve = fs::read_to_string(sd.join("curve.csv")).unwrap();
        assert_eq!(curve.lines().count(), 4);
        assert!(sd.join("shards.json").is_file());
    }
}

#[test]
fn invalid_config_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(&dir.path().join("bad"));
    cfg.clients_per_round = 10;
    match run_experiment(&cfg) {
        Err(Error::Config(msg)) => assert!(msg.contains("clients_per_round"), "{msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
    assert!(!cfg.output_dir.exists());
}

#[test]
fn toml_round_trip_and_unknown_keys() {
    let cfg = tiny(std::path::Path::new("runs/x"));
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back.to_toml_string(), cfg.to_toml_string());
    assert!(ExperimentConfig::from_toml_str("lamda = 0.1\n").is_err());
    let parsed = ExperimentConfig::from_toml_str("method = \"fed_focal\"\nfocal_gamma = 1.5\n").unwrap();
    assert_eq!(parsed.method, Method::FedFocal);
    assert_eq!(parsed.focal_gamma, 1.5);
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(&dir.path().join("sweep"));
    cfg.seeds = vec![0];
    let values = ["2".to_string(), "inf".to_string()];
    let points = run_sweep(&cfg, SweepAxis::ThresholdT, &values).unwrap();
    assert_eq!(points.len(), 2);
    let table = fs::read_to_string(cfg.output_dir.join("sweep_threshold_t.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("threshold_t,"));
    assert!(rows[2].starts_with("inf,"));
}

#[test]
fn csv_dataset_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let sample = |label: usize, k: usize| LabeledSample {
        features: vec![label as f64 + 0.01 * k as f64, -(label as f64), 0.5],
        label,
    };
    let train: Vec<LabeledSample> = (0..3).flat_map(|c| (0..30).map(move |k| sample(c, k))).collect();
    let test: Vec<LabeledSample> = (0..3).flat_map(|c| (0..5).map(move |k| sample(c, k))).collect();
    let train_path = dir.path().join("train.csv");
    let test_path = dir.path().join("test.csv");
    write_csv_samples(&train_path, &train).unwrap();
    write_csv_samples(&test_path, &test).unwrap();
    assert_eq!(read_csv_samples(&train_path).unwrap(), train);

    let mut cfg = tiny(&dir.path().join("csv_run"));
    cfg.dataset = DatasetKind::Csv;
    cfg.csv_train = Some(train_path);
    cfg.csv_test = Some(test_path);
    cfg.num_classes = 3;
    cfg.n0 = 30;
    cfg.ir = 3.0;
    cfg.seeds = vec![0];
    let summary = run_experiment(&cfg).unwrap();
    assert!((0.0..=1.0).contains(&summary.overall_mean));
}

#[test]
fn malformed_csv_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "label,f0\n0,1.0\n1,abc\n").unwrap();
    let err = read_csv_samples(&path).unwrap_err().to_string();
    assert!(err.contains('3') || err.contains("line"), "{err}");
}
