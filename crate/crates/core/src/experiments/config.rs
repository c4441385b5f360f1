use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::AlgorithmSpec;
use crate::error::{Error, Result};
use crate::pacbayes::{PosteriorMode, Regime, DEFAULT_GRID_SIZE};
use crate::problems::{PartitionSizes, ProblemSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    PosteriorConvergence,
    Conditioning,
    ConvProb,
    PacBound,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::PosteriorConvergence => "posterior-convergence",
            ExperimentId::Conditioning => "conditioning",
            ExperimentId::ConvProb => "conv-prob",
            ExperimentId::PacBound => "pac-bound",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "posterior-convergence" => Ok(ExperimentId::PosteriorConvergence),
            "conditioning" => Ok(ExperimentId::Conditioning),
            "conv-prob" => Ok(ExperimentId::ConvProb),
            "pac-bound" => Ok(ExperimentId::PacBound),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacSection {
    pub regime: Regime,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub posterior_mode: PosteriorMode,
    /// Convergence constant `C` of the guaranteed regime.
    #[serde(default = "one")]
    pub c_const: f64,
    /// Also report posterior-weighted means next to the argmax particle.
    #[serde(default)]
    pub report_posterior_mean: bool,
}

fn default_targets() -> Vec<f64> {
    vec![0.9]
}

fn default_iterations() -> usize {
    2
}

fn default_particles() -> usize {
    100
}

fn default_keep() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// Target convergence probabilities `ε_conv`.
    #[serde(default = "default_targets")]
    pub targets: Vec<f64>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    #[serde(default = "default_keep")]
    pub keep_fraction: f64,
    /// Mean of the Gaussian step-size prior, in units of `1/L` (guaranteed regime).
    #[serde(default)]
    pub gaussian_mean: Option<f64>,
    /// Standard deviation of the Gaussian step-size prior, in units of `1/L`.
    #[serde(default)]
    pub gaussian_std_dev: Option<f64>,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            targets: default_targets(),
            iterations: default_iterations(),
            n_particles: default_particles(),
            keep_fraction: default_keep(),
            gaussian_mean: None,
            gaussian_std_dev: None,
        }
    }
}

fn default_n_it_list() -> Vec<usize> {
    vec![5, 15, 45, 135]
}

fn default_test_sets() -> usize {
    25
}

fn default_test_set_size() -> usize {
    250
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Iteration counts of the posterior-convergence sweep.
    #[serde(default = "default_n_it_list")]
    pub n_iterations: Vec<usize>,
    /// Held-out test sets of the conv-prob experiment.
    #[serde(default = "default_test_sets")]
    pub n_test_sets: usize,
    #[serde(default = "default_test_set_size")]
    pub test_set_size: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n_iterations: default_n_it_list(),
            n_test_sets: default_test_sets(),
            test_set_size: default_test_set_size(),
        }
    }
}

/// A complete run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub experiment: Option<ExperimentId>,
    /// Master seed for datasets, particles and test sets.
    pub seed: u64,
    /// Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<String>,
    pub problem: ProblemSettings,
    pub algorithm: AlgorithmSpec,
    pub pac: PacSection,
    #[serde(default)]
    pub prior: PriorSection,
    pub partitions: PartitionSizes,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.problem.n == 0 {
            return Err(Error::Config("problem.n must be positive".into()));
        }
        if self.algorithm.n_iterations == 0 {
            return Err(Error::Config("algorithm.n_iterations must be positive".into()));
        }
        if !(self.pac.epsilon > 0.0 && self.pac.epsilon < 1.0) {
            return Err(Error::Config("pac.epsilon must lie in (0, 1)".into()));
        }
        if self.pac.grid_size == 0 {
            return Err(Error::Config("pac.grid_size must be positive".into()));
        }
        if self.prior.targets.iter().any(|t| !(*t >= 0.0 && *t <= 1.0)) {
            return Err(Error::Config("prior.targets must lie in [0, 1]".into()));
        }
        if self.prior.n_particles == 0 {
            return Err(Error::Config("prior.n_particles must be positive".into()));
        }
        if self.sweep.n_iterations.iter().any(|k| *k == 0) {
            return Err(Error::Config("sweep.n_iterations entries must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization, in hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn require(&self, what: &str, ok: bool) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Config(what.into()))
        }
    }
}
