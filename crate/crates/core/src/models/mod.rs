//! Trainable predictors, their objectives and the training loop.

pub mod checkpoint;
pub mod heatmapnet;
pub mod loss;
pub mod mlp;
pub mod pathcnn;
pub mod train;

pub use heatmapnet::{HeatmapNet, HeatmapNetSpec};
pub use loss::{loss_coord, loss_heatmap};
pub use mlp::{Mlp, MlpSpec};
pub use pathcnn::{PathCnn, PathCnnSpec};
pub use train::{train, train_with, History, ModelKind, Prediction, TrainConfig, TrainedModel};
