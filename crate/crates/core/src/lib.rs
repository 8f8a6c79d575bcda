//! Hierarchical keyword spotting for child speech.
//!
//! The crate covers the whole pipeline: WAV ingestion and corpus
//! manifests ([`dataset`]), signal conditioning ([`dsp`]), frame features
//! and MFCCs ([`features`]), augmentation ([`augment`]), static and
//! clustering-based class grouping ([`grouping`]), a from-scratch CNN-LSTM
//! trainer ([`neural`]) and the two-stage classifier with its evaluation
//! battery ([`hierarchy`]).
//!
//! ```text
//! wav -> resample -> noise gate -> pre-emphasis -> MFCC / frame features
//!     -> stage 1 (group) -> stage 2 (class within group)
//! ```

pub mod augment;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod features;
pub mod grouping;
pub mod hierarchy;
pub mod neural;
pub mod pipeline;
pub mod rng;

pub use dataset::{AudioClip, DatasetManifest, ManifestEntry};
pub use error::{Error, Result};
pub use features::{FeatureVector, MfccMatrix};
pub use grouping::GroupMap;
pub use hierarchy::{EvalReport, HierarchyModel};
pub use neural::{ModelConfig, TrainConfig};
