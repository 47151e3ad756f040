//! Dense matrices, fully connected networks with explicit backpropagation,
//! the Adam optimizer and the basic losses every trainable model here uses.

mod adam;
mod loss;
mod matrix;
mod mlp;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{log_softmax_row, mse_loss, one_hot, softmax, softmax_ce_loss, softmax_in_place, LOG_FLOOR};
pub use matrix::{argmax, Matrix};
pub use mlp::{Activation, ForwardCache, Gradients, Layer, LayerSpec, MlpModel};
