//! Audio-visual target speaker extraction with disentangled speaker, acoustic and
//! semantic cues fused by learned reliability weights.

pub mod backend;
pub mod config;
pub mod cues;
pub mod degradation;
pub mod error;
pub mod eval;
pub mod features;
pub mod frontends;
pub mod kmeans;
pub mod learner;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod synth;
pub mod wav;

pub use config::{CueToggles, FusionMode, ModelConfig, Preset};
pub use error::{CueError, Result};
pub use model::{Batch, CueNet};
