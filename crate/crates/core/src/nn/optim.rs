use super::params::{Gradients, ParamSet};
use crate::error::{Error, Result};

/// Momentum SGD: `v ← μ·v + g`, `p ← p − lr·v`.
///
/// `velocity` is `None` before the first step and is treated as zero.
/// Returns the updated parameters and the new velocity.
pub fn sgd_step(
    params: &ParamSet,
    grads: &Gradients,
    lr: f64,
    velocity: Option<&Gradients>,
    momentum: f64,
) -> Result<(ParamSet, Gradients)> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::argument(format!("learning rate must be > 0, got {lr}")));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::argument(format!("momentum must be in [0, 1), got {momentum}")));
    }
    if !params.congruent(grads) {
        return Err(Error::config("gradient shapes do not match parameters"));
    }
    let new_velocity = match velocity {
        Some(v) => {
            if !params.congruent(v) {
                return Err(Error::config("momentum state shapes do not match parameters"));
            }
            let mut v = v.clone();
            for (vt, gt) in v.tensors_mut().zip(grads.tensors()) {
                for (vi, gi) in vt.iter_mut().zip(gt) {
                    *vi = momentum * *vi + gi;
                }
            }
            v
        }
        None => grads.clone(),
    };
    let mut updated = params.clone();
    updated.axpy(-lr, &new_velocity);
    Ok((updated, new_velocity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::matrix::DenseMatrix;

    fn scalar(v: f64) -> ParamSet {
        ParamSet {
            encoder: vec![],
            main_classifier: DenseMatrix::from_vec(1, 1, vec![v]).unwrap(),
            aux_classifier: None,
            classifier_bias: false,
        }
    }

    fn value(p: &ParamSet) -> f64 {
        p.main_classifier.get(0, 0)
    }

    #[test]
    fn plain_step() {
        let (p, _) = sgd_step(&scalar(1.0), &scalar(2.0), 0.1, None, 0.0).unwrap();
        assert!((value(&p) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn momentum_recurrence() {
        let g = scalar(1.0);
        let (p1, v1) = sgd_step(&scalar(0.0), &g, 1.0, None, 0.9).unwrap();
        assert_eq!(value(&p1), -1.0);
        let (p2, _) = sgd_step(&p1, &g, 1.0, Some(&v1), 0.9).unwrap();
        assert!((value(&p2) + 2.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let p = scalar(3.5);
        let (q, _) = sgd_step(&p, &scalar(0.0), 0.5, Some(&scalar(0.0)), 0.9).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn argument_checks() {
        let p = scalar(0.0);
        assert!(sgd_step(&p, &p, 0.0, None, 0.0).is_err());
        assert!(sgd_step(&p, &p, 0.1, None, 1.0).is_err());
        let other = ParamSet {
            main_classifier: DenseMatrix::zeros(2, 1),
            ..p.clone()
        };
        assert!(matches!(sgd_step(&p, &other, 0.1, None, 0.0), Err(Error::Config(_))));
    }
}
