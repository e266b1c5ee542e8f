//! Minimal differentiable layer kit: the exact layer set the policy and the
//! classifiers need, each with a hand-written backward pass.
//!
//! Backpropagation is explicit: a network's forward pass records whatever its
//! layers need (inputs, pooling winners, LSTM gate activations) and the
//! backward pass walks that record in reverse, accumulating into
//! [`Param::grad`]. All reductions run in a fixed order, so results are
//! bit-reproducible.

mod activation;
mod adam;
mod block;
pub mod checkpoint;
mod conv;
pub mod init;
mod linear;
mod loss;
mod lstm;
mod model;
mod tensor;

pub use activation::{
    log_softmax_row, maxpool2x2, maxpool2x2_backward, relu, relu_backward, sigmoid, softmax, softmax_row,
};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use block::{ConvBlock, ConvBlockCache};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGeometry, ConvGrads};
pub use linear::{fc_backward, fc_forward, FcGrads, Linear};
pub use loss::{argmax, cross_entropy, softmax_cross_entropy, CrossEntropy};
pub use lstm::{lstm_cell_step, LstmBackward, LstmCell, LstmStepCache};
pub use model::{ImageClassifier, Parameterized};
pub use tensor::{Param, Tensor};
