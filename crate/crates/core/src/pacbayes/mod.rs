//! Exponential-family PAC-Bayes learning over a particle cloud.
//!
//! For a sufficient statistic `T̃(α) = (−R̂(α), T′(α))` and natural parameter
//! `η(λ) = (λ, −λ²/2·s)` the learning problem reduces to the one-dimensional
//! minimization of
//!
//! ```text
//! F(λ) = −(1/λ)·(κ̃(λ) − log(|Λ|/ε)),   κ̃(λ) = log E_prior[exp⟨η(λ), T̃⟩]
//! ```
//!
//! over a finite grid `Λ`. The minimizer gives the bound `F(λ*)` and the Gibbs
//! posterior `dQ/dP ∝ exp⟨η(λ*), T̃⟩`. Prior expectations are particle means.
//!
//! Two regimes are provided:
//!
//! * [`Regime::Guaranteed`]: `T′ = ρ(α)²` with `s = C²·E[ℓ(x⁰)²]/N`. Only gradient
//!   descent has an analytic `ρ`; particles with `ρ > 1` lie outside the
//!   convergence-guaranteed hyperparameter set and are excluded.
//! * [`Regime::Conditioned`]: `R̂` is replaced by the empirical convergence risk,
//!   `T′ = 1/p̂²` and `s = E[ℓ(x⁰)²]/N`. Particles with `p̂ = 0` are excluded.

mod oracles;

pub use oracles::{
    check_gibbs_optimality, gibbs_variational_gap, mc_check_exponential_moment, MomentCheckSetup, MomentEstimate,
};

use serde::{Deserialize, Serialize};

use crate::algorithms::{gd_contraction_rho, Algorithm, AlgorithmSpec, HyperparameterPoint};
use crate::error::{Error, Result};
use crate::problems::ProblemInstance;
use crate::risk::RiskRecord;

/// Default number of grid points for `λ`.
pub const DEFAULT_GRID_SIZE: usize = 25_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Guaranteed,
    Conditioned,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Guaranteed => "guaranteed",
            Regime::Conditioned => "conditioned",
        }
    }
}

/// How posterior weights are formed on the particle support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorMode {
    /// `wᵢ ∝ f(αᵢ)·exp⟨η, T̃(αᵢ)⟩`, with `f` the prior density.
    #[default]
    PriorWeighted,
    /// `wᵢ ∝ exp⟨η, T̃(αᵢ)⟩` (self-normalized importance weights of prior draws).
    Importance,
}

/// The bound regime with its constants.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticsPlan {
    pub regime: Regime,
    /// Training-set size `N`.
    pub n: usize,
    /// PAC confidence parameter `ε`.
    pub epsilon: f64,
    /// Estimate of `E[ℓ(x⁰, S)²]`.
    pub second_moment: f64,
    /// Convergence constant `C` (guaranteed regime).
    pub c_const: f64,
    /// Spectrum bounds `(μ, L)` used for the analytic `ρ` (guaranteed regime).
    pub spectrum: Option<(f64, f64)>,
    /// `|Λ|`, entering the bound through `log(|Λ|/ε)`.
    pub lambda_count: usize,
    pub posterior_mode: PosteriorMode,
}

impl StatisticsPlan {
    pub fn guaranteed(n: usize, epsilon: f64, second_moment: f64, c_const: f64, mu: f64, ell: f64) -> Result<Self> {
        Self {
            regime: Regime::Guaranteed,
            n,
            epsilon,
            second_moment,
            c_const,
            spectrum: Some((mu, ell)),
            lambda_count: DEFAULT_GRID_SIZE,
            posterior_mode: PosteriorMode::default(),
        }
        .validated()
    }

    pub fn conditioned(n: usize, epsilon: f64, second_moment: f64) -> Result<Self> {
        Self {
            regime: Regime::Conditioned,
            n,
            epsilon,
            second_moment,
            c_const: 1.0,
            spectrum: None,
            lambda_count: DEFAULT_GRID_SIZE,
            posterior_mode: PosteriorMode::default(),
        }
        .validated()
    }

    pub fn with_lambda_count(mut self, count: usize) -> Self {
        self.lambda_count = count;
        self
    }

    pub fn with_posterior_mode(mut self, mode: PosteriorMode) -> Self {
        self.posterior_mode = mode;
        self
    }

    fn validated(self) -> Result<Self> {
        if self.n == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.second_moment >= 0.0) || !self.second_moment.is_finite() {
            return Err(Error::Config("second moment must be finite and non-negative".into()));
        }
        if !(self.c_const >= 0.0) {
            return Err(Error::Config("C must be non-negative".into()));
        }
        if let Some((mu, ell)) = self.spectrum {
            if !(mu > 0.0) || !(ell >= mu) {
                return Err(Error::InvalidSpectrum { mu, ell });
            }
        }
        Ok(self)
    }

    /// Coefficient `s` in `η₂(λ) = −λ²/2·s`.
    pub fn eta2_scale(&self) -> f64 {
        match self.regime {
            Regime::Guaranteed => self.c_const * self.c_const * self.second_moment / self.n as f64,
            Regime::Conditioned => self.second_moment / self.n as f64,
        }
    }

    pub fn eta(&self, lambda: f64) -> [f64; 2] {
        [lambda, -0.5 * lambda * lambda * self.eta2_scale()]
    }

    /// `log(|Λ|/ε)`.
    pub fn log_term(&self) -> f64 {
        (self.lambda_count as f64 / self.epsilon).ln()
    }
}

/// Sufficient statistic and bookkeeping for one particle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParticleStatistics {
    /// `T̃ = (−R̂ or −R̂_c, T′)`.
    pub t: [f64; 2],
    /// Empirical risk (or convergence risk) entering `T̃₁`.
    pub risk: f64,
    /// Convergence probability estimate on the training data.
    pub p_hat: Option<f64>,
    pub excluded: bool,
}

/// Prior samples with their log densities and statistics.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    pub particles: Vec<HyperparameterPoint>,
    pub prior_log_density: Vec<f64>,
    pub statistics: Vec<ParticleStatistics>,
}

impl ParticleCloud {
    pub fn new(particles: Vec<HyperparameterPoint>, prior_log_density: Vec<f64>) -> Result<Self> {
        let stats = vec![ParticleStatistics::default(); particles.len()];
        Self::with_statistics(particles, prior_log_density, stats)
    }

    pub fn with_statistics(
        particles: Vec<HyperparameterPoint>,
        prior_log_density: Vec<f64>,
        statistics: Vec<ParticleStatistics>,
    ) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Empty("particle cloud"));
        }
        if prior_log_density.len() != particles.len() || statistics.len() != particles.len() {
            return Err(Error::DimensionMismatch {
                expected: particles.len(),
                got: prior_log_density.len().min(statistics.len()),
            });
        }
        Ok(Self {
            particles,
            prior_log_density,
            statistics,
        })
    }

    /// Cloud with the given `T̃` values and a flat prior; for tests and demos.
    pub fn from_statistics(t: &[[f64; 2]]) -> Result<Self> {
        let particles = (0..t.len()).map(|i| HyperparameterPoint::gd(i as f64 + 1.0)).collect();
        let stats = t
            .iter()
            .map(|t| ParticleStatistics {
                t: *t,
                risk: -t[0],
                p_hat: None,
                excluded: false,
            })
            .collect();
        Self::with_statistics(particles, vec![0.0; t.len()], stats)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Whether particle `i` is in the posterior support.
    pub fn is_retained(&self, i: usize) -> bool {
        !self.statistics[i].excluded && self.prior_log_density[i].is_finite()
    }

    pub fn retained(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.is_retained(i))
    }

    pub fn n_retained(&self) -> usize {
        self.retained().count()
    }

    pub fn exclude(&mut self, i: usize) {
        self.statistics[i].excluded = true;
    }

    fn inner(&self, i: usize, eta: [f64; 2]) -> f64 {
        let t = self.statistics[i].t;
        eta[0] * t[0] + eta[1] * t[1]
    }
}

/// Algorithm and initialization used to evaluate the statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningContext {
    pub spec: AlgorithmSpec,
    pub x0: Vec<f64>,
}

impl LearningContext {
    pub fn new(spec: AlgorithmSpec, dim: usize) -> Self {
        Self {
            spec,
            x0: vec![0.0; dim],
        }
    }
}

/// Evaluates `T̃(αᵢ, D_N)` for every particle on the training instances.
/// Particles already marked excluded stay excluded and are not evaluated.
pub fn compute_statistics(
    plan: &StatisticsPlan,
    cloud: &ParticleCloud,
    train: &[ProblemInstance],
    ctx: &LearningContext,
) -> Result<ParticleCloud> {
    if train.is_empty() {
        return Err(Error::Empty("training instances"));
    }
    let mut out = cloud.clone();
    match plan.regime {
        Regime::Guaranteed => {
            if ctx.spec.algorithm != Algorithm::GradientDescent {
                return Err(Error::UnsupportedRegime(format!(
                    "no analytic contraction factor for {}",
                    ctx.spec.algorithm.name()
                )));
            }
            let (mu, ell) = plan
                .spectrum
                .ok_or_else(|| Error::UnsupportedRegime("guaranteed regime needs spectrum bounds".into()))?;
            for (i, alpha) in cloud.particles.iter().enumerate() {
                if cloud.statistics[i].excluded {
                    continue;
                }
                let rho = gd_contraction_rho(alpha, mu, ell, ctx.spec.n_iterations)?;
                if rho > 1.0 {
                    out.statistics[i] = ParticleStatistics {
                        t: [f64::NEG_INFINITY, rho * rho],
                        risk: f64::INFINITY,
                        p_hat: None,
                        excluded: true,
                    };
                    continue;
                }
                let risk = RiskRecord::evaluate(alpha, train, &ctx.spec, &ctx.x0)?.empirical_risk()?;
                out.statistics[i] = ParticleStatistics {
                    t: [-risk, rho * rho],
                    risk,
                    p_hat: None,
                    excluded: !risk.is_finite(),
                };
            }
        }
        Regime::Conditioned => {
            for (i, alpha) in cloud.particles.iter().enumerate() {
                if cloud.statistics[i].excluded {
                    continue;
                }
                let rec = RiskRecord::evaluate(alpha, train, &ctx.spec, &ctx.x0)?;
                let p = rec.p_hat()?;
                out.statistics[i] = if p > 0.0 {
                    let risk = rec.convergence_risk(p)?;
                    ParticleStatistics {
                        t: [-risk, 1.0 / (p * p)],
                        risk,
                        p_hat: Some(p),
                        excluded: false,
                    }
                } else {
                    ParticleStatistics {
                        t: [0.0, f64::INFINITY],
                        risk: 0.0,
                        p_hat: Some(0.0),
                        excluded: true,
                    }
                };
            }
        }
    }
    Ok(out)
}

/// `log Σ exp(xᵢ)` with max subtraction; `−∞` for an empty input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `κ̃(λ)`: log of the particle mean of `exp⟨η(λ), T̃⟩` over retained particles.
pub fn kappa_tilde(lambda: f64, plan: &StatisticsPlan, cloud: &ParticleCloud) -> Result<f64> {
    let n = cloud.n_retained();
    if n == 0 {
        return Err(Error::AllExcluded);
    }
    let eta = plan.eta(lambda);
    let terms: Vec<f64> = cloud.retained().map(|i| cloud.inner(i, eta)).collect();
    Ok(log_sum_exp(&terms) - (n as f64).ln())
}

/// `F(λ) = −(1/λ)(κ̃(λ) − log(|Λ|/ε))`.
pub fn objective_f(lambda: f64, plan: &StatisticsPlan, cloud: &ParticleCloud) -> Result<f64> {
    Ok(-(kappa_tilde(lambda, plan, cloud)? - plan.log_term()) / lambda)
}

/// Finite grid of candidate `λ` values in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("lambda grid"));
        }
        if values.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) || values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("lambda grid must be strictly increasing within (0, 1]".into()));
        }
        Ok(Self { values })
    }

    /// `λᵢ = i/size`, `i = 1..=size`.
    pub fn linear(size: usize) -> Result<Self> {
        Self::new((1..=size).map(|i| i as f64 / size as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Minimizes `F` over the grid (with `|Λ|` taken from the grid). Ties go to the
/// smallest `λ`.
pub fn grid_search_lambda(grid: &LambdaGrid, plan: &StatisticsPlan, cloud: &ParticleCloud) -> Result<(f64, f64)> {
    let plan = plan.clone().with_lambda_count(grid.len());
    let idx: Vec<usize> = cloud.retained().collect();
    if idx.is_empty() {
        return Err(Error::AllExcluded);
    }
    let log_m = (idx.len() as f64).ln();
    let log_term = plan.log_term();
    let mut terms = vec![0.0; idx.len()];
    let mut best = (f64::NAN, f64::INFINITY);
    for &lambda in grid.values() {
        let eta = plan.eta(lambda);
        for (t, &i) in terms.iter_mut().zip(&idx) {
            *t = cloud.inner(i, eta);
        }
        let kappa = log_sum_exp(&terms) - log_m;
        let f = -(kappa - log_term) / lambda;
        if f < best.1 {
            best = (lambda, f);
        }
    }
    if best.0.is_nan() {
        return Err(Error::Config("objective is not finite anywhere on the grid".into()));
    }
    Ok(best)
}

/// Log of the unnormalized base weight of particle `i` under `mode`.
fn base_log_weight(cloud: &ParticleCloud, i: usize, mode: PosteriorMode) -> f64 {
    match mode {
        PosteriorMode::PriorWeighted => cloud.prior_log_density[i],
        PosteriorMode::Importance => 0.0,
    }
}

/// Normalized weights from log weights; `None` entries get weight 0.
fn normalize_log_weights(logw: &[Option<f64>]) -> Result<Vec<f64>> {
    let m = logw.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::AllExcluded);
    }
    let raw: Vec<f64> = logw.iter().map(|w| w.map_or(0.0, |w| (w - m).exp())).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Normalized reference weights `P̂` on the particle support.
pub fn reference_weights(plan: &StatisticsPlan, cloud: &ParticleCloud) -> Result<Vec<f64>> {
    let logw: Vec<Option<f64>> = (0..cloud.len())
        .map(|i| cloud.is_retained(i).then(|| base_log_weight(cloud, i, plan.posterior_mode)))
        .collect();
    normalize_log_weights(&logw)
}

/// Gibbs posterior weights at `λ`; excluded particles receive exactly 0.
pub fn gibbs_posterior(lambda: f64, plan: &StatisticsPlan, cloud: &ParticleCloud) -> Result<Vec<f64>> {
    let eta = plan.eta(lambda);
    let logw: Vec<Option<f64>> = (0..cloud.len())
        .map(|i| {
            cloud
                .is_retained(i)
                .then(|| base_log_weight(cloud, i, plan.posterior_mode) + cloud.inner(i, eta))
        })
        .collect();
    normalize_log_weights(&logw)
}

/// Outcome of one learning run.
#[derive(Debug, Clone)]
pub struct PacLearningResult {
    pub regime: Regime,
    pub lambda_star: f64,
    /// `min F`, the bound on the posterior's expected (convergence) risk.
    pub bound: f64,
    pub posterior_weights: Vec<f64>,
    pub argmax_index: usize,
    pub argmax_particle: HyperparameterPoint,
    /// Training risk of the argmax particle.
    pub argmax_risk: f64,
    /// `E_Q[R̂]` under the posterior.
    pub posterior_risk: f64,
    pub kappa_at_star: f64,
    pub log_term: f64,
    pub n_particles: usize,
    pub n_retained: usize,
}

impl PacLearningResult {
    pub const CSV_HEADER: &'static str = "regime,lambda_star,bound,kappa_at_star,log_term,n_particles,seed";

    pub fn csv_row(&self, seed: u64) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            self.regime.as_str(),
            self.lambda_star,
            self.bound,
            self.kappa_at_star,
            self.log_term,
            self.n_particles,
            seed
        )
    }
}

/// Grid search, Gibbs posterior and argmax particle (lowest index on ties).
pub fn pac_bound_report(grid: &LambdaGrid, plan: &StatisticsPlan, cloud: &ParticleCloud) -> Result<PacLearningResult> {
    let plan = plan.clone().with_lambda_count(grid.len());
    let (lambda_star, bound) = grid_search_lambda(grid, &plan, cloud)?;
    let weights = gibbs_posterior(lambda_star, &plan, cloud)?;
    let mut argmax = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > weights[argmax] {
            argmax = i;
        }
    }
    let posterior_risk = cloud
        .retained()
        .map(|i| weights[i] * cloud.statistics[i].risk)
        .sum();
    Ok(PacLearningResult {
        regime: plan.regime,
        lambda_star,
        bound,
        argmax_index: argmax,
        argmax_particle: cloud.particles[argmax].clone(),
        argmax_risk: cloud.statistics[argmax].risk,
        posterior_risk,
        kappa_at_star: kappa_tilde(lambda_star, &plan, cloud)?,
        log_term: plan.log_term(),
        n_particles: cloud.len(),
        n_retained: cloud.n_retained(),
        posterior_weights: weights,
    })
}

/// Right-hand side `log(N(δ, Λ)/ε) + C` of the covering-number bound on
/// `sup κ`.
pub fn covering_bound(covering_number: u64, c_modulus: f64, epsilon: f64) -> Result<f64> {
    if covering_number == 0 {
        return Err(Error::Config("covering number must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) || !(c_modulus >= 0.0) {
        return Err(Error::Config("need epsilon in (0, 1) and C >= 0".into()));
    }
    Ok((covering_number as f64 / epsilon).ln() + c_modulus)
}

#[cfg(test)]
mod tests;
