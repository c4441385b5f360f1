//! Prior distributions over hyperparameters and the data-dependent prior
//! construction: start from ranges around the worst-case hyperparameters, then
//! repeatedly learn on one prior split, drop particles whose convergence
//! probability on the other split falls below the target, keep the most
//! probable survivors and refit a uniform box to them.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, HyperparameterPoint, MOMENTUM, STEP_SIZE};
use crate::error::{Error, Result};
use crate::pacbayes::{compute_statistics, pac_bound_report, LambdaGrid, LearningContext, ParticleCloud, StatisticsPlan};
use crate::problems::ProblemInstance;
use crate::risk::{initial_loss_second_moment, RiskRecord};
use crate::seed;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// One-dimensional prior factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Marginal {
    Uniform { low: f64, high: f64 },
    /// Restricted to non-negative values. The truncation constant is left out
    /// of the log density since it cancels in normalized weights.
    Gaussian { mean: f64, std_dev: f64 },
}

impl Marginal {
    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            Marginal::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::InvalidPrior(format!("{name}: need low < high, got [{low}, {high}]")));
                }
                if low < 0.0 {
                    return Err(Error::InvalidPrior(format!("{name}: support must be non-negative")));
                }
            }
            Marginal::Gaussian { mean, std_dev } => {
                if !(mean.is_finite() && std_dev.is_finite() && std_dev > 0.0) {
                    return Err(Error::InvalidPrior(format!("{name}: need a positive finite std_dev")));
                }
            }
        }
        Ok(())
    }

    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { low, high } => {
                if (low..=high).contains(&x) {
                    -(high - low).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::Gaussian { mean, std_dev } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = (x - mean) / std_dev;
                -0.5 * z * z - std_dev.ln() - LN_SQRT_2PI
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform { low, high } => rng.random_range(low..=high),
            Marginal::Gaussian { mean, std_dev } => {
                let normal = Normal::new(mean, std_dev).expect("validated");
                loop {
                    let x = normal.sample(rng);
                    if x >= 0.0 {
                        return x;
                    }
                }
            }
        }
    }
}

/// Product prior with one independent factor per hyperparameter name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSpec {
    pub marginals: BTreeMap<String, Marginal>,
}

impl PriorSpec {
    pub fn new(marginals: BTreeMap<String, Marginal>) -> Result<Self> {
        let spec = Self { marginals };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.marginals.is_empty() {
            return Err(Error::InvalidPrior("no hyperparameters".into()));
        }
        for (name, m) in &self.marginals {
            m.validate(name)?;
        }
        Ok(())
    }

    pub fn uniform(ranges: &[(&str, f64, f64)]) -> Result<Self> {
        Self::new(
            ranges
                .iter()
                .map(|(n, lo, hi)| (n.to_string(), Marginal::Uniform { low: *lo, high: *hi }))
                .collect(),
        )
    }

    pub fn gaussian_step_size(mean: f64, std_dev: f64) -> Result<Self> {
        Self::new(BTreeMap::from([(STEP_SIZE.to_string(), Marginal::Gaussian { mean, std_dev })]))
    }

    /// Sum of marginal log densities; `−∞` outside the support.
    pub fn log_density(&self, alpha: &HyperparameterPoint) -> Result<f64> {
        let mut total = 0.0;
        for (name, m) in &self.marginals {
            total += m.log_density(alpha.get(name)?);
        }
        Ok(total)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> HyperparameterPoint {
        let mut p = HyperparameterPoint::new();
        for (name, m) in &self.marginals {
            p.set(name, m.sample(rng));
        }
        p
    }

    /// `count` prior draws with their log densities.
    pub fn sample_cloud(&self, count: usize, seed: u64) -> Result<ParticleCloud> {
        let mut rng = seed::rng_for(seed, "prior-sample");
        let particles: Vec<HyperparameterPoint> = (0..count).map(|_| self.sample(&mut rng)).collect();
        let logd = particles.iter().map(|p| self.log_density(p)).collect::<Result<Vec<_>>>()?;
        ParticleCloud::new(particles, logd)
    }

    /// Uniform box `[low, high]` per name, if every factor is uniform.
    pub fn support_box(&self) -> Option<BTreeMap<String, (f64, f64)>> {
        self.marginals
            .iter()
            .map(|(n, m)| match *m {
                Marginal::Uniform { low, high } => Some((n.clone(), (low, high))),
                Marginal::Gaussian { .. } => None,
            })
            .collect()
    }

    /// Whether every uniform box of `self` lies inside that of `outer`.
    pub fn contained_in(&self, outer: &PriorSpec) -> bool {
        match (self.support_box(), outer.support_box()) {
            (Some(inner), Some(outer)) => inner.iter().all(|(n, (lo, hi))| {
                outer
                    .get(n)
                    .is_some_and(|(olo, ohi)| *lo >= *olo && *hi <= *ohi)
            }),
            _ => false,
        }
    }
}

/// Initial uniform range for one hyperparameter.
pub fn initial_range(name: &str, epsilon_conv: f64, l_max: f64, beta_std: f64) -> Result<(f64, f64)> {
    let range = match name {
        STEP_SIZE => {
            if !(epsilon_conv > 0.0) {
                return Err(Error::InvalidPrior("epsilon_conv must be positive".into()));
            }
            if !(l_max > 0.0 && l_max.is_finite()) {
                return Err(Error::InvalidPrior(format!("L_max must be positive, got {l_max}")));
            }
            ((0.5 / epsilon_conv) * (2.0 / l_max), (3.0 / epsilon_conv) * (2.0 / l_max))
        }
        MOMENTUM => (0.5 * beta_std, 2.0 * beta_std),
        other => return Err(Error::InvalidPrior(format!("no initial range rule for {other}"))),
    };
    if !(range.0 < range.1) || !range.1.is_finite() {
        return Err(Error::InvalidPrior(format!("{name}: degenerate range [{}, {}]", range.0, range.1)));
    }
    Ok(range)
}

fn default_iterations() -> usize {
    2
}

fn default_keep_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBuildConfig {
    pub epsilon_conv: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    pub n_particles: usize,
    #[serde(default = "default_keep_fraction")]
    pub keep_fraction: f64,
    pub l_max: f64,
    /// Worst-case momentum; required for heavy ball.
    #[serde(default)]
    pub beta_std: Option<f64>,
}

impl PriorBuildConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_conv > 0.0 && self.epsilon_conv <= 1.0) {
            return Err(Error::InvalidPrior(format!("epsilon_conv must lie in (0, 1], got {}", self.epsilon_conv)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidPrior("iterations must be at least 1".into()));
        }
        if self.n_particles == 0 {
            return Err(Error::InvalidPrior("n_particles must be at least 1".into()));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::InvalidPrior(format!("keep_fraction must lie in (0, 1], got {}", self.keep_fraction)));
        }
        Ok(())
    }

    /// Uniform prior over the initial ranges for every hyperparameter of `algorithm`.
    pub fn initial_prior(&self, algorithm: Algorithm) -> Result<PriorSpec> {
        let beta = match (algorithm, self.beta_std) {
            (Algorithm::HeavyBall, None) => return Err(Error::MissingHyperparameter("beta_std".into())),
            (_, b) => b.unwrap_or(0.0),
        };
        let mut marginals = BTreeMap::new();
        for name in algorithm.hyperparameter_names() {
            let (low, high) = initial_range(name, self.epsilon_conv, self.l_max, beta)?;
            marginals.insert(name.to_string(), Marginal::Uniform { low, high });
        }
        PriorSpec::new(marginals)
    }
}

/// Diagnostics of one refinement round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub sampled: usize,
    pub survivors: usize,
    pub kept: usize,
    pub spec: PriorSpec,
}

#[derive(Debug, Clone)]
pub struct PriorBuild {
    pub spec: PriorSpec,
    /// Particles kept in the last round, with their `p̂` on the filter split.
    pub survivors: Vec<(HyperparameterPoint, f64)>,
    pub rounds: Vec<RoundReport>,
}

/// Inputs shared by every round of [`build_prior`].
pub struct PriorBuildInputs<'a> {
    /// Regime and constants; `n` and the second moment are replaced by values
    /// computed on `prior_1`.
    pub plan: &'a StatisticsPlan,
    pub ctx: &'a LearningContext,
    pub grid: &'a LambdaGrid,
    pub prior_1: &'a [ProblemInstance],
    pub prior_2: &'a [ProblemInstance],
}

/// Indices passing `p̂ ≥ ε_conv`, then the `keep_fraction` of those with the
/// highest posterior weight (at least two when available, so a box can be
/// refit). Filtering comes first; equal weights keep index order.
pub fn select_survivors(weights: &[f64], p_hats: &[f64], epsilon_conv: f64, keep_fraction: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p_hats.len()).filter(|&i| p_hats[i] >= epsilon_conv).collect();
    let n = idx.len();
    idx.sort_by(|a, b| weights[*b].total_cmp(&weights[*a]));
    let keep = ((keep_fraction * n as f64).ceil() as usize).max(n.min(2));
    idx.truncate(keep);
    idx
}

/// Iterative prior construction. Survivors are re-sampled each round from the
/// refitted box, so every box lies inside the previous one.
pub fn build_prior(
    config: &PriorBuildConfig,
    inputs: &PriorBuildInputs<'_>,
    initial: Option<PriorSpec>,
    seed: u64,
) -> Result<PriorBuild> {
    config.validate()?;
    if inputs.prior_1.is_empty() || inputs.prior_2.is_empty() {
        return Err(Error::Empty("prior partitions"));
    }
    let mut spec = match initial {
        Some(s) => {
            s.validate()?;
            s
        }
        None => config.initial_prior(inputs.ctx.spec.algorithm)?,
    };
    let mut plan = inputs.plan.clone();
    plan.n = inputs.prior_1.len();
    plan.second_moment = initial_loss_second_moment(inputs.prior_1, &inputs.ctx.x0)?;

    let mut rounds = Vec::with_capacity(config.iterations);
    let mut last = Vec::new();
    for round in 0..config.iterations {
        let fail = |reason: String| Error::PriorConstructionFailed { round, reason };
        let cloud = spec.sample_cloud(config.n_particles, seed::derive(seed, &format!("round-{round}")))?;
        let cloud = compute_statistics(&plan, &cloud, inputs.prior_1, inputs.ctx)?;
        let weights = match pac_bound_report(inputs.grid, &plan, &cloud) {
            Ok(r) => r.posterior_weights,
            Err(Error::AllExcluded) => return Err(fail("every particle was excluded on prior_1".into())),
            Err(e) => return Err(e),
        };

        let p_hats = cloud
            .particles
            .iter()
            .map(|alpha| RiskRecord::evaluate(alpha, inputs.prior_2, &inputs.ctx.spec, &inputs.ctx.x0)?.p_hat())
            .collect::<Result<Vec<f64>>>()?;
        let n_survivors = p_hats.iter().filter(|p| **p >= config.epsilon_conv).count();
        let survivors = select_survivors(&weights, &p_hats, config.epsilon_conv, config.keep_fraction);
        if survivors.is_empty() {
            return Err(fail(format!("no particle reached p_hat >= {}", config.epsilon_conv)));
        }

        let mut marginals = BTreeMap::new();
        for name in spec.marginals.keys() {
            let mut low = f64::INFINITY;
            let mut high = f64::NEG_INFINITY;
            for i in &survivors {
                let v = cloud.particles[*i].get(name)?;
                low = low.min(v);
                high = high.max(v);
            }
            if !(low < high) {
                return Err(fail(format!("survivors collapse to a single value of {name}")));
            }
            marginals.insert(name.clone(), Marginal::Uniform { low, high });
        }
        spec = PriorSpec::new(marginals)?;
        rounds.push(RoundReport {
            round,
            sampled: cloud.len(),
            survivors: n_survivors,
            kept: survivors.len(),
            spec: spec.clone(),
        });
        last = survivors.into_iter().map(|i| (cloud.particles[i].clone(), p_hats[i])).collect();
    }
    Ok(PriorBuild {
        spec,
        survivors: last,
        rounds,
    })
}
