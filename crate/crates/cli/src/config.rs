//! Run configuration: one TOML file with a section per pipeline stage.
//!
//! ```toml
//! seed = 7
//!
//! [timegan]
//! epochs = 300
//!
//! [classifier]
//! epochs = 30
//! ```
//!
//! Top-level keys are `seed` and `workspace`. Sections are `ingest`,
//! `surrogate` (with `[surrogate.w1_nc]`-style class tables holding all of
//! `count`, `md_mean`, `md_std`, `pa_mean`, `pa_std`), `timegan`, `generate`,
//! `classifier` and `analysis`. Omitted keys take their defaults. A section's
//! `seed` is derived from the global seed unless the section sets it, and
//! `KINEGEN_SEED` replaces the global seed before derivation.

use std::path::{Path, PathBuf};

use kinegen::analysis::TsneConfig;
use kinegen::classifier::ClassifierConfig;
use kinegen::seed::derive_seed;
use kinegen::surrogate::SurrogateConfig;
use kinegen::timegan::TimeGanConfig;
use kinegen::ClassLabel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "KINEGEN_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Segments with fewer samples after trimming are dropped.
    pub min_samples: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { min_samples: 3 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Trials to sample per class; unset matches the real class size.
    pub per_class: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Skip the t-SNE projection (PCA is always computed).
    pub tsne: bool,
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub learning_rate: Option<f64>,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let t = TsneConfig::default();
        AnalysisConfig {
            tsne: true,
            perplexity: t.perplexity,
            iterations: t.iterations,
            exaggeration: t.exaggeration,
            exaggeration_iterations: t.exaggeration_iterations,
            learning_rate: t.learning_rate,
            seed: t.seed,
        }
    }
}

impl AnalysisConfig {
    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig {
            perplexity: self.perplexity,
            iterations: self.iterations,
            exaggeration: self.exaggeration,
            exaggeration_iterations: self.exaggeration_iterations,
            learning_rate: self.learning_rate,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Not part of the config hash: moving a workspace changes no output.
    #[serde(skip_serializing)]
    pub workspace: PathBuf,
    pub seed: u64,
    pub ingest: IngestConfig,
    pub surrogate: SurrogateConfig,
    pub timegan: TimeGanConfig,
    pub generate: GenerateConfig,
    pub classifier: ClassifierConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            workspace: PathBuf::from("."),
            seed: 0,
            ingest: IngestConfig::default(),
            surrogate: SurrogateConfig::default(),
            timegan: TimeGanConfig::default(),
            generate: GenerateConfig::default(),
            classifier: ClassifierConfig::default(),
            analysis: AnalysisConfig::default(),
        };
        cfg.derive_seeds(&toml::Table::new());
        cfg
    }
}

const SEEDED_SECTIONS: [(&str, u64); 5] = [("surrogate", 1), ("timegan", 2), ("generate", 3), ("classifier", 4), ("analysis", 5)];

impl RunConfig {
    /// Parses a config file body; `env_seed` replaces the global seed.
    pub fn parse(text: &str, env_seed: Option<u64>) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let mut cfg: RunConfig = table.clone().try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if let Some(seed) = env_seed {
            cfg.seed = seed;
        }
        cfg.derive_seeds(&table);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` if given, otherwise starts from defaults; honours `KINEGEN_SEED`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(CliError::io(p))?,
            None => String::new(),
        };
        let env_seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?),
            Err(_) => None,
        };
        Self::parse(&text, env_seed)
    }

    fn derive_seeds(&mut self, table: &toml::Table) {
        for (section, stream) in SEEDED_SECTIONS {
            let explicit = table.get(section).and_then(|v| v.as_table()).is_some_and(|t| t.contains_key("seed"));
            if explicit {
                continue;
            }
            let seed = derive_seed(self.seed, &[stream]);
            match section {
                "surrogate" => self.surrogate.seed = seed,
                "timegan" => self.timegan.seed = seed,
                "generate" => self.generate.seed = seed,
                "classifier" => self.classifier.seed = seed,
                _ => self.analysis.seed = seed,
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.surrogate.validate()?;
        self.timegan.validate()?;
        self.classifier.validate()?;
        if self.ingest.min_samples < 2 {
            return Err(CliError::Config("ingest.min_samples must be at least 2".into()));
        }
        if self.generate.per_class == Some(0) {
            return Err(CliError::Config("generate.per_class must be positive".into()));
        }
        if !(self.analysis.perplexity > 0.0) {
            return Err(CliError::Config("analysis.perplexity must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration (seeds included, workspace excluded).
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// TimeGAN settings for one class, with a class-specific seed.
    pub fn timegan_for(&self, class: ClassLabel) -> TimeGanConfig {
        TimeGanConfig { seed: derive_seed(self.timegan.seed, &[class_index(class)]), ..self.timegan.clone() }
    }

    pub fn generate_seed(&self, class: ClassLabel) -> u64 {
        derive_seed(self.generate.seed, &[class_index(class)])
    }
}

fn class_index(class: ClassLabel) -> u64 {
    ClassLabel::ALL.iter().position(|&c| c == class).expect("known class") as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("", None).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.timegan.hidden, 28);
    }

    #[test]
    fn seeds_derive_from_global_unless_set() {
        let a = RunConfig::parse("seed = 3\n[classifier]\nseed = 99\n", None).unwrap();
        assert_eq!(a.classifier.seed, 99);
        assert_eq!(a.timegan.seed, derive_seed(3, &[2]));
        let b = RunConfig::parse("seed = 3\n", Some(4)).unwrap();
        assert_eq!(b.seed, 4);
        assert_eq!(b.timegan.seed, derive_seed(4, &[2]));
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn hash_ignores_workspace() {
        let a = RunConfig::parse("workspace = \"/a\"\n", None).unwrap();
        let b = RunConfig::parse("workspace = \"/b\"\n", None).unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn typos_and_bad_values_are_rejected() {
        assert!(matches!(RunConfig::parse("sed = 1\n", None), Err(CliError::Config(_))));
        assert!(RunConfig::parse("[timegan]\nepochs = 0\n", None).is_err());
    }

    #[test]
    fn class_seeds_differ() {
        let cfg = RunConfig::default();
        assert_ne!(cfg.timegan_for(ClassLabel::W1_NC).seed, cfg.timegan_for(ClassLabel::W2_C).seed);
    }
}
