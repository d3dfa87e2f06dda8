//! Experiment configuration: one TOML file with a section per module.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use mastersample::evostrat::default_population_size;
use mastersample::predictor::FilterConfig;
use mastersample::seed::derive_seed;
use mastersample::synthworld::WorldConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptimizerChoice {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "lmmaes")]
    LmMaEs,
    #[serde(rename = "lmmaes+predictor")]
    Assisted,
}

impl OptimizerChoice {
    pub const ALL: [OptimizerChoice; 3] = [Self::Random, Self::LmMaEs, Self::Assisted];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::LmMaEs => "lmmaes",
            Self::Assisted => "lmmaes+predictor",
        }
    }

    /// File-system friendly name.
    pub fn slug(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::LmMaEs => "lmmaes",
            Self::Assisted => "lmmaes-predictor",
        }
    }
}

impl fmt::Display for OptimizerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdPolicy {
    /// Loosest threshold whose FAR on the training pairs stays within `target`.
    FarTarget { target: f64 },
    /// Threshold balancing FAR and FRR on the training pairs.
    Eer,
    /// Joint grid search over both thresholds of a combined attack.
    CombinedGrid {
        #[serde(default = "default_grid_resolution")]
        resolution: usize,
    },
}

fn default_grid_resolution() -> usize {
    100
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self::FarTarget { target: 0.001 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoverageMode {
    /// One master per optimizer, best of the seeds.
    #[default]
    Single,
    /// Greedy dictionary of up to `max_iter` masters.
    Greedy {
        #[serde(default = "default_masters")]
        max_iter: usize,
    },
    /// One master per k-means cluster of the gallery.
    Clustered {
        #[serde(default = "default_masters")]
        k: usize,
    },
    /// One master against two models that must both accept it.
    Combined,
}

fn default_masters() -> usize {
    9
}

impl CoverageMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Single => "single",
            Self::Greedy { .. } => "greedy",
            Self::Clustered { .. } => "clustered",
            Self::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    /// Optimizers to compare, each run on every seed.
    pub run: Vec<OptimizerChoice>,
    pub initial_sigma: f64,
    /// Population size; the LM-MA-ES default for the latent dimension if unset.
    pub population: Option<usize>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            run: OptimizerChoice::ALL.to_vec(),
            initial_sigma: 1.0,
            population: None,
        }
    }
}

/// Predictor filter settings; the evaluated population comes from the
/// optimizer section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub oversample: usize,
    pub percentile: f64,
    pub accuracy_threshold: f64,
    pub patience: usize,
    pub warmup_fraction: f64,
    pub memory_capacity: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        let f = FilterConfig::default();
        Self {
            oversample: f.oversample,
            percentile: f.percentile,
            accuracy_threshold: f.accuracy_threshold,
            patience: f.patience,
            warmup_fraction: f.warmup_fraction,
            memory_capacity: f.memory_capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Every random stream of the experiment derives from this seed.
    pub root_seed: u64,
    /// Objective evaluations per optimizer run.
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub threshold: ThresholdPolicy,
    pub mode: CoverageMode,
    /// Train:test ratio of the identity split.
    pub split: [usize; 2],
    /// Generations between checkpoints of a run.
    pub checkpoint_every: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            root_seed: 0,
            budget: 26_400,
            seeds: (0..5).collect(),
            threshold: ThresholdPolicy::default(),
            mode: CoverageMode::default(),
            split: [4038, 1711],
            checkpoint_every: 100,
            output_dir: PathBuf::from("runs/experiment"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub optimizer: OptimizerSection,
    pub filter: FilterSection,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Fills derived values: the world seed and the population size.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.world.seed = world_seed(c.experiment.root_seed);
        c.optimizer.population = Some(
            c.optimizer
                .population
                .unwrap_or_else(|| default_population_size(c.world.latent_dim)),
        );
        c
    }

    pub fn population(&self) -> usize {
        self.optimizer
            .population
            .unwrap_or_else(|| default_population_size(self.world.latent_dim))
    }

    pub fn filter_config(&self) -> FilterConfig {
        let f = &self.filter;
        FilterConfig {
            oversample: f.oversample,
            population: self.population(),
            percentile: f.percentile,
            accuracy_threshold: f.accuracy_threshold,
            patience: f.patience,
            warmup_fraction: f.warmup_fraction,
            memory_capacity: f.memory_capacity,
        }
    }

    /// Hex digest of the resolved configuration, output location excluded.
    pub fn hash(&self) -> String {
        let mut c = self.resolved();
        c.experiment.output_dir = PathBuf::new();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        let config_err = |m: String| Err(CliError::Config(m));
        self.world
            .validate()
            .map_err(|e| CliError::Config(format!("[world] {e}")))?;
        let lambda = self.population();
        if lambda < 2 {
            return config_err(format!("population must be at least 2, got {lambda}"));
        }
        if !(self.optimizer.initial_sigma.is_finite() && self.optimizer.initial_sigma > 0.0) {
            return config_err("initial_sigma must be positive".into());
        }
        if self.optimizer.run.is_empty() {
            return config_err("no optimizer selected".into());
        }
        if has_duplicates(&self.optimizer.run) {
            return config_err("optimizers are listed twice".into());
        }
        if self.optimizer.run.contains(&OptimizerChoice::Assisted) {
            self.filter_config()
                .validate()
                .map_err(|e| CliError::Config(format!("[filter] {e}")))?;
        }
        let e = &self.experiment;
        if e.budget < lambda {
            return config_err(format!(
                "budget of {} evaluations is less than one generation of {lambda}",
                e.budget
            ));
        }
        if e.seeds.is_empty() {
            return config_err("seeds must not be empty".into());
        }
        if has_duplicates(&e.seeds) {
            return config_err("seeds must be distinct".into());
        }
        if e.split.contains(&0) {
            return config_err("both sides of the split ratio must be positive".into());
        }
        let n_train = self.train_size();
        if n_train < 2 || self.world.n_identities - n_train < 2 {
            return config_err(format!(
                "split of {} identities leaves fewer than 2 on one side",
                self.world.n_identities
            ));
        }
        if e.checkpoint_every == 0 {
            return config_err("checkpoint_every must be positive".into());
        }
        match e.mode {
            CoverageMode::Greedy { max_iter: 0 } => {
                return config_err("max_iter must be positive".into())
            }
            CoverageMode::Clustered { k: 0 } => return config_err("k must be positive".into()),
            _ => {}
        }
        match e.threshold {
            ThresholdPolicy::FarTarget { target } if !(target > 0.0 && target <= 1.0) => {
                config_err(format!("FAR target {target} outside (0, 1]"))
            }
            ThresholdPolicy::CombinedGrid { .. } if e.mode != CoverageMode::Combined => {
                config_err("the combined_grid policy needs the combined mode".into())
            }
            ThresholdPolicy::CombinedGrid { resolution: 0 } => {
                config_err("grid resolution must be positive".into())
            }
            _ => Ok(()),
        }
    }

    /// Training identities: the split ratio scaled to the world size.
    pub fn train_size(&self) -> usize {
        let [a, b] = self.experiment.split;
        self.world.n_identities * a / (a + b)
    }
}

/// Kept to 63 bits so it fits a TOML integer.
pub fn world_seed(root_seed: u64) -> u64 {
    derive_seed(root_seed, "world") >> 1
}

fn has_duplicates<T: Ord + Clone>(items: &[T]) -> bool {
    let mut v = items.to_vec();
    v.sort();
    v.windows(2).any(|w| w[0] == w[1])
}
