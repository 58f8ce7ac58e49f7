//! Body-forgery detection on synthetic video.
//!
//! The crate is organised the way the pipeline runs:
//!
//! * [`corpus`] generates real and forged videos, degrades them with a
//!   blockwise-DCT compression simulator, partitions them by pair and samples
//!   clips for training and evaluation.
//! * [`flow`] estimates dense optical flow (Horn–Schunck) and applies optical
//!   flow modulation to produce motion-guided frames.
//! * [`nn`] is the small differentiable numeric core (layers with hand-derived
//!   backward rules) the detector is built from.
//! * [`model`] is the two-branch detector: divided space-time attention over raw
//!   frames plus a frame-independent convolutional branch over motion-guided
//!   frames, fused into a single forgery logit.
//! * [`training`] runs the Adam loop with checkpointing and an audited loader.
//! * [`eval`] holds AUC/accuracy and the intra, cross-configuration and
//!   cross-manipulation protocols.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod flow;
pub mod model;
pub mod nn;
pub mod seed;
pub mod training;

pub use corpus::{ClipSample, Compression, Config, Family, Image, Label, Manifest, SampleRecord, Split, Video};
pub use error::{Error, Result};
pub use eval::{MetricsReport, Protocol, ScoredVideo};
pub use flow::{FlowField, FlowParams, WeightMap};
pub use model::{BranchMode, BranchOutput, ModelConfig, ModelParams};
pub use training::{RunState, TrainConfig, TrainLog};

/// Number of frames the detector consumes per clip.
pub const DEFAULT_CLIP_FRAMES: usize = 8;
