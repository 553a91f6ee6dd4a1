//! Test-time adaptation for class-imbalanced, non-i.i.d. test streams.
//!
//! * [`nn`]: small dense networks with manual backpropagation and Adam.
//! * [`norm`]: standard, robust (moving-average) and class-balanced batch
//!   normalization.
//! * [`streamgen`]: synthetic corrupted datasets and the globally/locally
//!   imbalanced stream protocol.
//! * [`tta`]: tri-net self-training and the TEST / BN / PL / TENT baselines.
//! * [`harness`]: error metrics, χ² checks, experiment grids and records.

pub mod error;
pub mod harness;
pub mod nn;
pub mod norm;
pub mod rng;
pub mod streamgen;
pub mod tta;

pub use error::{Error, Result};
pub use harness::{EpisodeResult, RunRecord};
pub use nn::{LabeledSet, Network, SourceModel, Tensor};
pub use norm::{NormState, NormVariant};
pub use streamgen::{ProtocolConfig, StreamBatch, Variant};
pub use tta::{Method, TribeHyperParams};
