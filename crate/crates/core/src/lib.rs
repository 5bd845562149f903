//! Tone-invariant representation learning for fair image classification.
//!
//! The crate bundles a small from-scratch convolutional network trained with
//! cross-entropy plus a representation-invariance penalty between each image
//! and a tone-shifted copy of it, the group fairness metrics used to audit the
//! result (per-group accuracy, equal opportunity difference, normalized
//! accuracy range), and seeded experiment protocols over synthetic
//! tone-biased data or image manifests.

pub mod config;
pub mod datakit;
pub mod error;
pub mod fairmetrics;
pub mod harness;
pub mod losses;
pub mod micronet;
pub mod seed;
pub mod tonemap;
pub mod trainer;

pub use crate::datakit::{Dataset, Image, Mask, Normalization, Sample, SplitTag};
pub use crate::error::{Error, Result};
pub use crate::fairmetrics::{MetricsReport, PredictionRow, Predictions};
pub use crate::losses::LossBundle;
pub use crate::micronet::{Arch, Hyper, Model};
pub use crate::tonemap::{AffineToneMap, IdentityToneMap, ToneTransform};
pub use crate::trainer::{TrainConfig, TrainHistory};
