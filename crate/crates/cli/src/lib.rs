//! Training, evaluation and ablation harness around [`cuenet_core::CueNet`].

pub mod run_config;
pub mod sweep;
pub mod tokens;
pub mod train;

pub use run_config::RunConfig;
pub use train::{run_train, run_train_with, TrainOutcome};
