//! Forward pass and analytic back-propagation for the MLP encoder with the
//! two-stream classifier head.
//!
//! Training logits are `z = Wᵀh + Ŵᵀh` when `Ŵ` is present and `z = Wᵀh`
//! otherwise. Hidden encoder layers use ReLU; the output layer is linear.

use super::loss::{loss_and_grad, LossKind};
use super::matrix::DenseMatrix;
use super::params::{Gradients, ParamSet};
use crate::error::{Error, Result};

/// Per-layer values kept from the forward pass for back-propagation.
struct Trace {
    /// Input to each layer; `inputs[l]` feeds layer `l`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    /// Representation `h`, with the trailing constant 1 when biased.
    repr: Vec<f64>,
}

fn check_input(params: &ParamSet, x: &[f64]) -> Result<()> {
    if x.len() != params.input_dim() {
        return Err(Error::config(format!(
            "feature vector has dimension {}, encoder expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    Ok(())
}

fn trace(params: &ParamSet, x: &[f64]) -> Trace {
    let depth = params.encoder.len();
    let mut inputs = Vec::with_capacity(depth);
    let mut pre = Vec::with_capacity(depth);
    let mut current = x.to_vec();
    for (l, layer) in params.encoder.iter().enumerate() {
        let mut a = layer.weight.matvec(&current);
        for (v, b) in a.iter_mut().zip(&layer.bias) {
            *v += b;
        }
        let out = if l + 1 < depth {
            a.iter().map(|v| v.max(0.0)).collect()
        } else {
            a.clone()
        };
        inputs.push(std::mem::replace(&mut current, out));
        pre.push(a);
    }
    if params.classifier_bias {
        current.push(1.0);
    }
    Trace {
        inputs,
        pre,
        repr: current,
    }
}

/// Representation `h = f(x; P)`, bias-augmented when the classifier has a bias.
pub(crate) fn encode_augmented(params: &ParamSet, x: &[f64]) -> Result<Vec<f64>> {
    check_input(params, x)?;
    Ok(trace(params, x).repr)
}

fn summed_logits(params: &ParamSet, h_aug: &[f64]) -> Vec<f64> {
    let mut z = params.main_classifier.matvec_t(h_aug);
    if let Some(aux) = &params.aux_classifier {
        for (zi, ai) in z.iter_mut().zip(aux.matvec_t(h_aug)) {
            *zi += ai;
        }
    }
    z
}

/// Representation `h` and training logits `z`.
pub fn forward(params: &ParamSet, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_input(params, x)?;
    let t = trace(params, x);
    let z = summed_logits(params, &t.repr);
    let mut h = t.repr;
    h.truncate(params.repr_dim());
    Ok((h, z))
}

/// Inference logits `Wᵀh`; the auxiliary classifier is ignored.
pub fn inference_logits(params: &ParamSet, x: &[f64]) -> Result<Vec<f64>> {
    let h = encode_augmented(params, x)?;
    Ok(params.main_classifier.matvec_t(&h))
}

/// Mean loss over `batch` and its gradient with respect to every parameter.
pub fn backward(
    params: &ParamSet,
    batch: &[(&[f64], usize)],
    kind: &LossKind,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::argument("backward on an empty batch"));
    }
    let c = params.num_classes();
    let d = params.repr_dim();
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    for &(x, y) in batch {
        check_input(params, x)?;
        if y >= c {
            return Err(Error::argument(format!("label {y} out of range for {c} classes")));
        }
        let t = trace(params, x);
        let z = summed_logits(params, &t.repr);
        let (l, dz) = loss_and_grad(&z, y, kind)?;
        total += l;

        grads.main_classifier.add_outer(&t.repr, &dz, 1.0);
        let mut dh = params.main_classifier.matvec(&dz);
        if let (Some(aux), Some(g_aux)) = (&params.aux_classifier, &mut grads.aux_classifier) {
            g_aux.add_outer(&t.repr, &dz, 1.0);
            for (a, b) in dh.iter_mut().zip(aux.matvec(&dz)) {
                *a += b;
            }
        }
        dh.truncate(d);

        let depth = params.encoder.len();
        for l in (0..depth).rev() {
            let mut delta = dh;
            if l + 1 < depth {
                for (g, a) in delta.iter_mut().zip(&t.pre[l]) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let layer = &params.encoder[l];
            let g_layer = &mut grads.encoder[l];
            g_layer.weight.add_outer(&delta, &t.inputs[l], 1.0);
            for (gb, dv) in g_layer.bias.iter_mut().zip(&delta) {
                *gb += dv;
            }
            dh = layer.weight.matvec_t(&delta);
        }
    }
    let inv = 1.0 / batch.len() as f64;
    grads.tensors_mut().for_each(|t| t.iter_mut().for_each(|v| *v *= inv));
    Ok((total * inv, grads))
}

/// Gradient of the mean cross-entropy of `Wᵀh` (main classifier only) with
/// respect to `W`, given precomputed bias-augmented representations.
pub(crate) fn main_classifier_ce_gradient_from_repr(
    w: &DenseMatrix,
    reprs: &[(Vec<f64>, usize)],
) -> Result<DenseMatrix> {
    if reprs.is_empty() {
        return Err(Error::argument("classifier gradient over zero samples"));
    }
    let mut g = DenseMatrix::zeros(w.rows(), w.cols());
    for (h, y) in reprs {
        let z = w.matvec_t(h);
        let (_, dz) = loss_and_grad(&z, *y, &LossKind::CrossEntropy)?;
        g.add_outer(h, &dz, 1.0);
    }
    g.scale(1.0 / reprs.len() as f64);
    Ok(g)
}

/// `∇_W` of the mean cross-entropy over `samples`, computed through `W` alone
/// (no `Ŵ`). Used for gradient prototypes and the balanced real-data gradient.
pub fn main_classifier_ce_gradient(
    params: &ParamSet,
    samples: &[(&[f64], usize)],
) -> Result<DenseMatrix> {
    let reprs = samples
        .iter()
        .map(|&(x, y)| encode_augmented(params, x).map(|h| (h, y)))
        .collect::<Result<Vec<_>>>()?;
    main_classifier_ce_gradient_from_repr(&params.main_classifier, &reprs)
}
