use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};
use crate::seed::SeedNode;

/// One dense encoder layer, `a = weight · x + bias`, weight shaped `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

/// Encoder `P`, main classifier `W` and optional auxiliary classifier `Ŵ`.
///
/// Classifiers are stored `rows × C`, where `rows` is the representation
/// dimension `d`, plus one extra row holding the bias when `classifier_bias`
/// is set. The representation is augmented with a constant 1 in that case,
/// so the bias takes part in every norm and prototype alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub encoder: Vec<EncoderLayer>,
    pub main_classifier: DenseMatrix,
    pub aux_classifier: Option<DenseMatrix>,
    pub classifier_bias: bool,
}

/// Gradients share the parameter layout tensor for tensor.
pub type Gradients = ParamSet;

/// Architecture description used to build fresh parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    /// Output widths of successive encoder layers; the last one is `d`.
    /// Empty means the identity encoder.
    pub layer_widths: Vec<usize>,
    pub num_classes: usize,
    pub aux_classifier: bool,
    pub classifier_bias: bool,
}

impl ModelSpec {
    pub fn repr_dim(&self) -> usize {
        self.layer_widths.last().copied().unwrap_or(self.input_dim)
    }

    /// He-uniform encoder weights with zero biases, classifiers uniform in
    /// `±1/√d`. `Ŵ` draws from its own stream so toggling it never changes `P`
    /// or `W`.
    pub fn init(&self, seed: SeedNode) -> Result<ParamSet> {
        if self.input_dim == 0 || self.num_classes < 2 {
            return Err(Error::config(format!(
                "model needs input_dim >= 1 and >= 2 classes, got {} and {}",
                self.input_dim, self.num_classes
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::config("encoder layer width 0"));
        }
        let mut rng = seed.child(0).rng();
        let mut encoder = Vec::with_capacity(self.layer_widths.len());
        let mut fan_in = self.input_dim;
        for &width in &self.layer_widths {
            let bound = (6.0 / fan_in as f64).sqrt();
            let weight =
                DenseMatrix::from_fn(width, fan_in, |_, _| rng.random_range(-bound..bound));
            encoder.push(EncoderLayer {
                weight,
                bias: vec![0.0; width],
            });
            fan_in = width;
        }
        let d = self.repr_dim();
        let rows = d + usize::from(self.classifier_bias);
        let bound = 1.0 / (d as f64).sqrt();
        let classifier = |node: SeedNode| {
            let mut rng = node.rng();
            DenseMatrix::from_fn(rows, self.num_classes, |r, _| {
                if r < d {
                    rng.random_range(-bound..bound)
                } else {
                    0.0
                }
            })
        };
        let main_classifier = classifier(seed.child(1));
        let aux_classifier = self.aux_classifier.then(|| classifier(seed.child(2)));
        Ok(ParamSet {
            encoder,
            main_classifier,
            aux_classifier,
            classifier_bias: self.classifier_bias,
        })
    }
}

impl ParamSet {
    pub fn input_dim(&self) -> usize {
        self.encoder
            .first()
            .map_or_else(|| self.repr_dim(), |l| l.weight.cols())
    }

    /// Representation dimension `d` (excluding the bias row).
    pub fn repr_dim(&self) -> usize {
        self.main_classifier.rows() - usize::from(self.classifier_bias)
    }

    pub fn num_classes(&self) -> usize {
        self.main_classifier.cols()
    }

    pub fn has_aux(&self) -> bool {
        self.aux_classifier.is_some()
    }

    pub fn without_aux(mut self) -> Self {
        self.aux_classifier = None;
        self
    }

    /// Checks the structural invariants of the parameter set.
    pub fn validate(&self) -> Result<()> {
        let mut prev = None;
        for (i, layer) in self.encoder.iter().enumerate() {
            if layer.bias.len() != layer.weight.rows() {
                return Err(Error::config(format!("encoder layer {i}: bias length mismatch")));
            }
            if let Some(p) = prev {
                if layer.weight.cols() != p {
                    return Err(Error::config(format!(
                        "encoder layer {i}: expects input {}, previous layer emits {p}",
                        layer.weight.cols()
                    )));
                }
            }
            prev = Some(layer.weight.rows());
        }
        if self.classifier_bias && self.main_classifier.rows() == 0 {
            return Err(Error::config("bias-augmented classifier has no rows"));
        }
        if let Some(p) = prev {
            if p != self.repr_dim() {
                return Err(Error::config(format!(
                    "encoder output {p} does not match classifier representation dim {}",
                    self.repr_dim()
                )));
            }
        }
        if let Some(aux) = &self.aux_classifier {
            if !aux.same_shape(&self.main_classifier) {
                return Err(Error::config("main and auxiliary classifier shapes differ"));
            }
        }
        if !self.tensors().all(|t| t.iter().all(|v| v.is_finite())) {
            return Err(Error::argument("non-finite parameter entry"));
        }
        Ok(())
    }

    /// True when both sets have the same tensors with the same shapes.
    pub fn congruent(&self, other: &ParamSet) -> bool {
        self.classifier_bias == other.classifier_bias
            && self.encoder.len() == other.encoder.len()
            && self
                .encoder
                .iter()
                .zip(&other.encoder)
                .all(|(a, b)| a.weight.same_shape(&b.weight) && a.bias.len() == b.bias.len())
            && self.main_classifier.same_shape(&other.main_classifier)
            && match (&self.aux_classifier, &other.aux_classifier) {
                (Some(a), Some(b)) => a.same_shape(b),
                (None, None) => true,
                _ => false,
            }
    }

    pub fn zeros_like(&self) -> ParamSet {
        let mut z = self.clone();
        z.tensors_mut().for_each(|t| t.fill(0.0));
        z
    }

    /// Tensors in a fixed order: encoder (weight, bias) pairs, `W`, then `Ŵ`.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.encoder
            .iter()
            .flat_map(|l| [l.weight.values(), l.bias.as_slice()])
            .chain(std::iter::once(self.main_classifier.values()))
            .chain(self.aux_classifier.as_ref().map(DenseMatrix::values))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.encoder
            .iter_mut()
            .flat_map(|l| [l.weight.values_mut(), l.bias.as_mut_slice()])
            .chain(std::iter::once(self.main_classifier.values_mut()))
            .chain(self.aux_classifier.as_mut().map(DenseMatrix::values_mut))
    }

    pub fn num_values(&self) -> usize {
        self.tensors().map(<[f64]>::len).sum()
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &ParamSet) {
        debug_assert!(self.congruent(other));
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    /// `self - other`, tensor by tensor.
    pub fn sub(&self, other: &ParamSet) -> ParamSet {
        debug_assert!(self.congruent(other));
        let mut out = self.clone();
        for (a, b) in out.tensors_mut().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= y;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.tensors()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Raw little-endian bytes of every entry, in tensor order.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.tensors()
            .flat_map(|t| t.iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }
}
