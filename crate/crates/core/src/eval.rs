//! Balanced-test evaluation with `argmax Wᵀf(x; P)` (the auxiliary
//! classifier is never used), tail-class accuracy and last-k averaging.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::GlobalDataset;
use crate::error::{Error, Result};
use crate::nn::{inference_logits, loss, LossKind, ParamSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub round: usize,
    pub overall_accuracy: f64,
    /// Classes without test samples report 0.
    pub per_class_accuracy: Vec<f64>,
    pub tail_accuracy: f64,
    pub mean_loss: f64,
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// The `⌈0.3·C⌉` classes with the fewest training samples. Equal counts
/// favour higher class indices, so a monotone long tail yields the last 30%.
pub fn tail_classes(train_counts: &[usize]) -> BTreeSet<usize> {
    let n_tail = (train_counts.len() * 3).div_ceil(10);
    let mut order: Vec<usize> = (0..train_counts.len()).collect();
    order.sort_by(|&a, &b| train_counts[a].cmp(&train_counts[b]).then(b.cmp(&a)));
    order.into_iter().take(n_tail).collect()
}

pub fn evaluate(
    params: &ParamSet,
    test_set: &GlobalDataset,
    tail_set: &BTreeSet<usize>,
    round: usize,
) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::argument("empty test set"));
    }
    let c = params.num_classes();
    if test_set.num_classes() != c {
        return Err(Error::config("test set and model disagree on the number of classes"));
    }
    let mut correct = vec![0usize; c];
    let mut loss_sum = 0.0;
    for s in test_set.samples() {
        let z = inference_logits(params, &s.features)?;
        if argmax(&z) == s.label {
            correct[s.label] += 1;
        }
        loss_sum += loss(&z, s.label, &LossKind::CrossEntropy)?;
    }
    let per_class_accuracy: Vec<f64> = correct
        .iter()
        .zip(test_set.class_counts())
        .map(|(&k, &n)| if n == 0 { 0.0 } else { k as f64 / n as f64 })
        .collect();
    let tail_accuracy = if tail_set.is_empty() {
        0.0
    } else {
        tail_set.iter().map(|&t| per_class_accuracy[t]).sum::<f64>() / tail_set.len() as f64
    };
    Ok(EvalReport {
        round,
        overall_accuracy: correct.iter().sum::<usize>() as f64 / test_set.len() as f64,
        per_class_accuracy,
        tail_accuracy,
        mean_loss: loss_sum / test_set.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastKSummary {
    pub overall_accuracy: f64,
    pub tail_accuracy: f64,
}

/// Mean overall and tail accuracy over the final `k` reports.
pub fn last_k_average(reports: &[EvalReport], k: usize) -> Result<LastKSummary> {
    if k == 0 {
        return Err(Error::argument("k must be >= 1"));
    }
    if k > reports.len() {
        return Err(Error::argument(format!("k = {k} exceeds {} reports", reports.len())));
    }
    let tail = &reports[reports.len() - k..];
    let mean = |f: fn(&EvalReport) -> f64| tail.iter().map(f).sum::<f64>() / k as f64;
    Ok(LastKSummary {
        overall_accuracy: mean(|r| r.overall_accuracy),
        tail_accuracy: mean(|r| r.tail_accuracy),
    })
}

/// Writes `round,overall,tail` rows for plotting.
pub fn write_curve_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut out = String::from("round,overall,tail\n");
    for r in reports {
        out.push_str(&format!("{},{},{}\n", r.round, r.overall_accuracy, r.tail_accuracy));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_gaussian_mixture, LabeledSample};
    use crate::nn::DenseMatrix;
    use crate::seed::SeedNode;

    fn report(overall: f64, tail: f64) -> EvalReport {
        EvalReport {
            round: 0,
            overall_accuracy: overall,
            per_class_accuracy: vec![],
            tail_accuracy: tail,
            mean_loss: 0.0,
        }
    }

    #[test]
    fn tail_set_is_last_thirty_percent() {
        let counts = crate::data::longtail_counts(1000, 100.0, 10).unwrap();
        assert_eq!(tail_classes(&counts), [7, 8, 9].into());
        assert_eq!(tail_classes(&[10; 10]), [7, 8, 9].into());
        let binary = [5000, 5000, 5000, 50, 5000, 50, 5000, 50, 5000, 5000];
        assert_eq!(tail_classes(&binary), [3, 5, 7].into());
        assert_eq!(tail_classes(&[3, 2, 1, 1]).len(), 2);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn zero_classifier_predicts_class_zero() {
        let ds = synth_gaussian_mixture(4, 3, &[5; 4], 0.5, SeedNode::new(1)).unwrap();
        let p = ParamSet {
            encoder: vec![],
            main_classifier: DenseMatrix::zeros(3, 4),
            // Ŵ is ignored at inference.
            aux_classifier: Some(DenseMatrix::from_fn(3, 4, |r, c| (r + c) as f64)),
            classifier_bias: false,
        };
        let r = evaluate(&p, &ds, &[3].into(), 1).unwrap();
        assert_eq!(r.overall_accuracy, 0.25);
        assert_eq!(r.per_class_accuracy, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(r.tail_accuracy, 0.0);
    }

    #[test]
    fn separable_data_with_matching_classifier() {
        // σ = 0: every sample sits on its class mean; W = means as columns.
        let mix = crate::data::GaussianMixture::new(3, 5, 0.0, SeedNode::new(2)).unwrap();
        let ds = mix.sample(&[4, 4, 4], SeedNode::new(3)).unwrap();
        let w = DenseMatrix::from_fn(5, 3, |r, c| mix.means()[c][r]);
        let p = ParamSet {
            encoder: vec![],
            main_classifier: w,
            aux_classifier: None,
            classifier_bias: false,
        };
        assert_eq!(evaluate(&p, &ds, &[2].into(), 1).unwrap().overall_accuracy, 1.0);
    }

    #[test]
    fn last_k() {
        let rs = vec![report(0.5, 0.1), report(0.7, 0.3)];
        let s = last_k_average(&rs, 2).unwrap();
        assert!((s.overall_accuracy - 0.6).abs() < 1e-15);
        assert_eq!(last_k_average(&rs, 1).unwrap().overall_accuracy, 0.7);
        assert!(last_k_average(&rs, 0).is_err());
        assert!(last_k_average(&rs, 3).is_err());
        let constant = vec![report(0.42, 0.1); 5];
        assert!((last_k_average(&constant, 5).unwrap().overall_accuracy - 0.42).abs() < 1e-15);
    }

    #[test]
    fn empty_test_set_rejected() {
        let ds = GlobalDataset::new(Vec::<LabeledSample>::new(), 2).unwrap();
        let p = ParamSet {
            encoder: vec![],
            main_classifier: DenseMatrix::zeros(2, 2),
            aux_classifier: None,
            classifier_bias: false,
        };
        assert!(evaluate(&p, &ds, &BTreeSet::new(), 0).is_err());
    }
}
