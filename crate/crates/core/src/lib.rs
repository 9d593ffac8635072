//! Generative modelling of human transport-movement velocity profiles.
//!
//! The crate covers the whole offline pipeline:
//!
//! * [`ingest`]: recordings to velocity-norm trials, segmentation, padding and trimming.
//! * [`nn`]: a small f64 neural substrate (GRU/LSTM stacks, dense layers, Adam,
//!   finite-difference gradient checks) with hand-derived backpropagation.
//! * [`timegan`]: one TimeGAN-style model per object class.
//! * [`classifier`]: bidirectional-LSTM train-on-real/test-on-synthetic harness.
//! * [`analysis`]: kinematic features, outliers, PCA, exact t-SNE, histograms.
//! * [`surrogate`]: a parametric stand-in dataset with published class statistics.

pub mod analysis;
pub mod classifier;
pub mod error;
pub mod ingest;
pub mod nn;
pub mod seed;
pub mod surrogate;
pub mod timegan;

pub use error::{Error, Result};
pub use ingest::{ClassLabel, Care, Provenance, Trial, TrialSet, Weight};
