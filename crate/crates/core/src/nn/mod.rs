//! Dense numeric layer: matrices, the MLP encoder with a two-stream
//! classifier head, losses, back-propagation and momentum SGD.

pub mod loss;
pub mod matrix;
pub mod model;
pub mod optim;
pub mod params;

pub use loss::{loss, loss_and_grad, softmax, LossKind, PROB_EPSILON};
pub use matrix::{frobenius_norm, DenseMatrix};
pub use model::{backward, forward, inference_logits, main_classifier_ce_gradient};
pub use optim::sgd_step;
pub use params::{EncoderLayer, Gradients, ModelSpec, ParamSet};
