//! Fully connected classifiers, the order-control losses and training.

mod loss;
mod mlp;
mod train;

pub use loss::{
    classification_loss, delta_logits, input_gradient, input_gradients, loss_encourage, loss_penalize,
    negative_entropy, order_loss_with_subsets, sample_nested_subsets, softmax, softmax_cross_entropy, Batch, OrderLoss,
};
pub use mlp::{argmax, Dense, Gradients, MlpModel, ModelFile, Trace, MODEL_FORMAT_VERSION};
pub use train::{accuracy, train, DnnType, EpochRecord, ModelPreset, TrainConfig, TrainOutcome};
