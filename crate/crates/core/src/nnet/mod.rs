//! From-scratch CNN and CNN-LSTM direction classifiers.

pub mod gradcheck;
pub mod layers;
mod model;
mod tensor;
mod train;

pub use model::{Arch, ModelConfig, Network, LSTM_STEPS};
pub use tensor::{Params, Tensor};
pub use train::{
    grid_search, label_for, train, EpochStats, Example, GridOutcome, Prediction, TrainedModel,
    CHECKPOINT_VERSION, DEFAULT_L2_GRID,
};
