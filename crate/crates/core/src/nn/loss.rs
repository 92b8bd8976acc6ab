//! Classification losses on a single logit vector.
//!
//! All three losses are functions of the softmax probability `p_y` of the true
//! class. Logarithms take `max(p_y, PROB_EPSILON)` so the loss stays bounded;
//! gradients use the unclamped probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities inside logarithms.
pub const PROB_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    /// `-(1 - p_y)^γ · ln p_y`
    Focal { gamma: f64 },
    /// `(α + β·R[y]) · CE`
    Ratio {
        alpha: f64,
        beta: f64,
        ratio: Vec<f64>,
    },
}

impl LossKind {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self {
            LossKind::CrossEntropy => Ok(()),
            LossKind::Focal { gamma } => {
                if gamma.is_finite() && *gamma >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::argument(format!("focal gamma must be finite and >= 0, got {gamma}")))
                }
            }
            LossKind::Ratio { alpha, beta, ratio } => {
                if !alpha.is_finite() || !beta.is_finite() {
                    return Err(Error::argument("ratio loss alpha/beta must be finite"));
                }
                if ratio.len() != num_classes {
                    return Err(Error::config(format!(
                        "ratio vector has {} entries for {num_classes} classes",
                        ratio.len()
                    )));
                }
                if ratio.iter().any(|r| !r.is_finite() || *r < 0.0) {
                    return Err(Error::argument("ratio vector entries must be finite and >= 0"));
                }
                Ok(())
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

fn cross_entropy_from_prob(p: f64) -> f64 {
    -p.max(PROB_EPSILON).ln()
}

fn check_label(z: &[f64], y: usize) -> Result<()> {
    if y >= z.len() {
        return Err(Error::argument(format!("label {y} out of range for {} classes", z.len())));
    }
    Ok(())
}

/// Loss of logits `z` against class `y`.
pub fn loss(z: &[f64], y: usize, kind: &LossKind) -> Result<f64> {
    check_label(z, y)?;
    let p = softmax(z)[y];
    Ok(loss_from_prob(p, y, kind))
}

fn loss_from_prob(p: f64, y: usize, kind: &LossKind) -> f64 {
    let ce = cross_entropy_from_prob(p);
    match kind {
        LossKind::CrossEntropy => ce,
        LossKind::Focal { gamma } => (1.0 - p).max(0.0).powf(*gamma) * ce,
        LossKind::Ratio { alpha, beta, ratio } => (alpha + beta * ratio[y]) * ce,
    }
}

/// Loss and its gradient with respect to the logits.
pub fn loss_and_grad(z: &[f64], y: usize, kind: &LossKind) -> Result<(f64, Vec<f64>)> {
    check_label(z, y)?;
    let probs = softmax(z);
    let p = probs[y];
    let value = loss_from_prob(p, y, kind);

    // Every loss here is f(p_y); dL/dz_j = f'(p_y) · p_y · (δ_jy − p_j).
    // For CE, f'(p)·p = −1, which gives the familiar softmax − onehot.
    let coeff = match kind {
        LossKind::CrossEntropy => -1.0,
        LossKind::Ratio { alpha, beta, ratio } => -(alpha + beta * ratio[y]),
        LossKind::Focal { gamma } => {
            let q = 1.0 - p;
            if *gamma == 0.0 {
                -1.0
            } else if q <= 0.0 {
                0.0
            } else {
                // d/dp[-(1-p)^γ ln p] · p = γ(1-p)^(γ-1) p ln p − (1-p)^γ
                gamma * q.powf(gamma - 1.0) * p * p.ln() - q.powf(*gamma)
            }
        }
    };
    let grad = probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let delta = if j == y { 1.0 } else { 0.0 };
            coeff * (delta - pj)
        })
        .collect();
    Ok((value, grad))
}
