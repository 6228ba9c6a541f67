//! Two-prong convolutional-recurrent occupancy predictor and the small
//! differentiation kernel it is built on.

pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod params;
pub mod prong;
pub mod tensor;
pub mod train;

pub use conv::{conv2d_backward, conv2d_forward, ConvGeometry, ConvGrads};
pub use gradcheck::grad_check;
pub use graph::{softmax_channels, Gradients, Graph, Var};
pub use model::{
    argmax_smgm, merge_streams, prong_loss, Architecture, Model, ModelKind, Objective, Prong, RolloutOutput, Schedule,
    Scheduled, Widths,
};
pub use params::{Adam, ParamSet};
pub use prong::{
    convlstm_step, error_loss, prednet_error, semantic_loss, unroll, Feedback, Head, LstmState, ProngConfig, StepInput,
    Trace,
};
pub use tensor::{Scalar, Tensor};
pub use train::{evaluate_loss, semantic_cache, split_indices, train, LossCurve, TrainConfig};
