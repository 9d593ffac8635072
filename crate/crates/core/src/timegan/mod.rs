//! Per-class TimeGAN: embedder, recovery, generator, supervisor and discriminator
//! recurrent networks trained in three phases on padded velocity profiles.

mod network;
mod sample;
mod scaler;
mod train;

pub use network::{Network, NetworkSpec, Role};
pub use sample::{sample, MAX_SAMPLE_ATTEMPTS_PER_TRIAL};
pub use scaler::MinMaxScaler;
pub use train::{moment_loss, train, JointLosses, TimeGanNetworks, TrainingHistory};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ClassLabel;
use crate::nn::Checkpoint;

/// Width of each time step: the velocity norm.
pub const FEATURE_DIM: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeGanConfig {
    pub hidden: usize,
    pub layers: usize,
    pub batch_size: usize,
    /// Epochs for each of the three phases.
    pub epochs: usize,
    /// Weight of the supervised next-step loss in the generator objective.
    pub gamma: f64,
    /// Weight of the moment-matching loss in the generator objective.
    pub eta: f64,
    /// Weight of the supervised loss when refreshing embedder and recovery.
    pub embedder_supervised_weight: f64,
    pub lr: f64,
    /// Discriminate every time step instead of the final state only.
    pub per_step_discriminator: bool,
    /// Generator and embedder updates per discriminator update in the joint phase.
    pub generator_steps: usize,
    /// The discriminator is only updated on batches where its loss exceeds this.
    pub discriminator_threshold: f64,
    pub seed: u64,
}

impl Default for TimeGanConfig {
    fn default() -> Self {
        TimeGanConfig {
            hidden: 28,
            layers: 3,
            batch_size: 15,
            epochs: 2000,
            gamma: 1.0,
            eta: 10.0,
            embedder_supervised_weight: 0.1,
            lr: 1e-3,
            per_step_discriminator: false,
            generator_steps: 2,
            discriminator_threshold: 0.15,
            seed: 0,
        }
    }
}

impl TimeGanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.layers == 0 || self.batch_size == 0 || self.epochs == 0 || self.generator_steps == 0 {
            return Err(Error::validation("TimeGAN sizes and epoch count must be positive"));
        }
        let weights = [self.gamma, self.eta, self.embedder_supervised_weight, self.discriminator_threshold];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("TimeGAN loss weights and discriminator threshold must be finite and nonnegative"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("TimeGAN learning rate must be positive"));
        }
        Ok(())
    }
}

/// A trained per-class generator and everything needed to sample from it.
#[derive(Clone, Debug)]
pub struct TimeGanModel {
    pub label: ClassLabel,
    pub config: TimeGanConfig,
    /// Padded sequence length of the training batch.
    pub seq_len: usize,
    pub scaler: MinMaxScaler,
    pub networks: TimeGanNetworks,
    pub history: TrainingHistory,
}

/// Contents of `manifest.json` in a model directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub label: ClassLabel,
    pub config: TimeGanConfig,
    pub seq_len: usize,
    pub feat_dim: usize,
    pub scaler: MinMaxScaler,
    /// Network role → checkpoint file name.
    pub networks: BTreeMap<String, String>,
    pub history: TrainingHistory,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl TimeGanModel {
    /// Serialises the model as `(file name, contents)` pairs: a manifest plus
    /// one checkpoint per network.
    pub fn to_files(&self) -> Result<Vec<(String, String)>> {
        let mut files = Vec::new();
        let mut names = BTreeMap::new();
        for net in self.networks.all() {
            let file = format!("{}.json", net.spec.role.name());
            let ck = Checkpoint::from_store(&net.store, &net.spec)?;
            files.push((file.clone(), ck.to_json()?));
            names.insert(net.spec.role.name().to_owned(), file);
        }
        let manifest = ModelManifest {
            label: self.label,
            config: self.config.clone(),
            seq_len: self.seq_len,
            feat_dim: FEATURE_DIM,
            scaler: self.scaler,
            networks: names,
            history: self.history.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        files.insert(0, (MANIFEST_FILE.to_owned(), text));
        Ok(files)
    }

    /// Rebuilds a model from files produced by [`TimeGanModel::to_files`].
    pub fn from_files(mut read: impl FnMut(&str) -> Result<String>) -> Result<Self> {
        let manifest: ModelManifest = serde_json::from_str(&read(MANIFEST_FILE)?)?;
        let mut nets = Vec::new();
        for role in Role::ALL {
            let file = manifest
                .networks
                .get(role.name())
                .ok_or_else(|| Error::validation(format!("model manifest lacks the {} network", role.name())))?;
            let ck = Checkpoint::from_json(&read(file)?)?;
            let spec: NetworkSpec = serde_json::from_value(ck.config.clone())?;
            if spec.role != role {
                return Err(Error::validation(format!("{file} holds a {} network", spec.role.name())));
            }
            let mut net = Network::new(spec, ck.seed)?;
            ck.restore_into(&mut net.store)?;
            nets.push(net);
        }
        let mut it = nets.into_iter();
        let mut next = || it.next().expect("five roles");
        let networks = TimeGanNetworks {
            embedder: next(),
            recovery: next(),
            generator: next(),
            supervisor: next(),
            discriminator: next(),
            per_step_discriminator: manifest.config.per_step_discriminator,
        };
        manifest.scaler.validate()?;
        Ok(TimeGanModel {
            label: manifest.label,
            config: manifest.config,
            seq_len: manifest.seq_len,
            scaler: manifest.scaler,
            networks,
            history: manifest.history,
        })
    }
}
