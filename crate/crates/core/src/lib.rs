//! Video saliency prediction from learned patch classifiers.
//!
//! Feature stacks (colour, HSI contrasts, residual motion) are cut into
//! patches labelled from gaze density, a small convolutional network learns
//! to classify them, and dense maps are rebuilt from patch probabilities
//! and scored against recorded fixations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod cnn;
pub mod config;
pub mod contrast;
pub mod error;
pub mod fixation_map;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod pipeline;
pub mod plane;
pub mod saliency;
pub mod sampler;
pub mod synthetic;

pub use channels::ChannelConfig;
pub use cnn::{NetworkModel, SolverConfig, TrainReport};
pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use fixation_map::FixationMap;
pub use io::{DatasetManifest, FixationLog, FrameSequence};
pub use metrics::EvalResult;
pub use plane::PlaneStack;
pub use saliency::SaliencyMap;
pub use sampler::{PatchRecord, SamplerConfig};
