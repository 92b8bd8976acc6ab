use std::fmt;
use std::fs;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{run_experiment, ExperimentSummary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lambda,
    ThresholdT,
    Ir,
    Alpha,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::ThresholdT => "threshold_t",
            SweepAxis::Ir => "ir",
            SweepAxis::Alpha => "alpha",
        }
    }

    /// Applies `value` to `cfg`. `threshold_t` accepts `inf`.
    pub fn apply(self, cfg: &mut ExperimentConfig, value: &str) -> Result<()> {
        let real = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{}: bad value {value:?}", self.name())))
        };
        match self {
            SweepAxis::Lambda => cfg.lambda = real()?,
            SweepAxis::Ir => cfg.ir = real()?,
            SweepAxis::Alpha => cfg.alpha = real()?,
            SweepAxis::ThresholdT => {
                if matches!(value, "inf" | "infinity" | "∞") {
                    cfg.prototypes_only = true;
                } else {
                    cfg.threshold_t = value.parse().map_err(|_| {
                        Error::Config(format!("threshold_t: bad value {value:?}"))
                    })?;
                    cfg.prototypes_only = false;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepAxis::Lambda),
            "threshold_t" | "t" => Ok(SweepAxis::ThresholdT),
            "ir" => Ok(SweepAxis::Ir),
            "alpha" => Ok(SweepAxis::Alpha),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?} (expected lambda, threshold_t, ir or alpha)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: String,
    pub summary: ExperimentSummary,
}

/// Builds every point's config up front so a bad value fails before any
/// training starts.
fn point_configs(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<Vec<ExperimentConfig>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            axis.apply(&mut cfg, v)?;
            cfg.output_dir = base.output_dir.join(format!("{}_{v}", axis.name()));
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}

/// One experiment per value under `base.output_dir/<axis>_<value>/`, plus a
/// merged `sweep_<axis>.csv`.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<Vec<SweepPoint>> {
    let configs = point_configs(base, axis, values)?;
    let mut points = Vec::with_capacity(configs.len());
    for (cfg, value) in configs.iter().zip(values) {
        log::info!("sweep {axis} = {value}");
        points.push(SweepPoint {
            value: value.clone(),
            summary: run_experiment(cfg)?,
        });
    }
    let mut csv = format!("{},overall_mean,overall_std,tail_mean,tail_std\n", axis.name());
    for p in &points {
        let s = &p.summary;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            p.value, s.overall_mean, s.overall_std, s.tail_mean, s.tail_std
        ));
    }
    let path = base.output_dir.join(format!("sweep_{}.csv", axis.name()));
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_values() {
        let mut cfg = ExperimentConfig::default();
        SweepAxis::Lambda.apply(&mut cfg, "0.01").unwrap();
        assert_eq!(cfg.lambda, 0.01);
        SweepAxis::ThresholdT.apply(&mut cfg, "inf").unwrap();
        assert!(cfg.prototypes_only);
        SweepAxis::ThresholdT.apply(&mut cfg, "4").unwrap();
        assert!(!cfg.prototypes_only);
        assert_eq!(cfg.threshold_t, 4);
        assert!(SweepAxis::Alpha.apply(&mut cfg, "x").is_err());
        assert_eq!("ir".parse::<SweepAxis>().unwrap(), SweepAxis::Ir);
        assert!("gamma".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn invalid_point_fails_before_training() {
        let base = ExperimentConfig::default();
        let err = point_configs(&base, SweepAxis::Ir, &["10".into(), "0.5".into()]).unwrap_err();
        assert!(err.to_string().contains("ir"));
        assert!(point_configs(&base, SweepAxis::Ir, &[]).is_err());
    }

    #[test]
    fn small_sweep_writes_merged_csv() {
        let dir = tempfile::tempdir().unwrap();
        let base = ExperimentConfig {
            num_classes: 3,
            dim: 4,
            n0: 30,
            ir: 5.0,
            test_per_class: 5,
            n_clients: 2,
            clients_per_round: 2,
            rounds: 2,
            last_k: 1,
            local_epochs: 1,
            encoder_layers: vec![4],
            threshold_t: 2,
            seeds: vec![0],
            output_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        let values = vec!["2".to_string(), "inf".to_string()];
        let points = run_sweep(&base, SweepAxis::ThresholdT, &values).unwrap();
        assert_eq!(points.len(), 2);
        let csv = fs::read_to_string(dir.path().join("sweep_threshold_t.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(dir.path().join("threshold_t_inf/summary.json").exists());
    }
}
