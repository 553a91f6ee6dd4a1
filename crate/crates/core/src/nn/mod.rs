//! Minimal dense network: forward/backward passes with pluggable
//! normalization statistics, losses, Adam, and source pretraining.

mod adam;
pub mod checkpoint;
mod forward;
mod loss;
mod model;
mod network;
mod tensor;

pub use adam::Adam;
pub use forward::{
    backward, forward, forward_eval, forward_eval_with, forward_with, ForwardOutput, Gradients, LayerGrad, Mode,
    Trace,
};
pub use loss::{
    cross_entropy, entropy, mean_cross_entropy, mean_entropy, row_entropy, softmax, softmax_backward, PROB_FLOOR,
};
pub use model::{pretrain, LabeledSet, PretrainConfig, SourceModel};
pub use network::{DenseLayer, Layer, Network, Trainable};
pub use tensor::{argmax, Tensor};
