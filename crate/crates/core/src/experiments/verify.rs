//! Monte Carlo and variational oracles bundled for the `verify` command.

use rand::Rng;

use super::output::{fmt_float, OutputFile, Provenance};
use crate::algorithms::{AlgorithmSpec, HyperparameterPoint};
use crate::error::Result;
use crate::pacbayes::{
    covering_bound, gibbs_variational_gap, mc_check_exponential_moment, LearningContext, MomentCheckSetup,
    MomentEstimate, ParticleCloud, StatisticsPlan, DEFAULT_GRID_SIZE,
};
use crate::problems::{Family, ProblemDistributionConfig, ProblemSettings};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
    pub files: Vec<OutputFile>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Largest normalized variational gap `(V(Q) − V(Gibbs))/max(1, |V(Gibbs)|)`
/// over `n_clouds` random clouds.
pub fn gibbs_check(seed: u64, n_clouds: usize, n_particles: usize, n_perturbations: usize) -> Result<f64> {
    let mut rng = seed::rng_for(seed, "gibbs-clouds");
    let mut worst = f64::NEG_INFINITY;
    for c in 0..n_clouds {
        let t: Vec<[f64; 2]> = (0..n_particles)
            .map(|_| [-rng.random_range(0.0..100.0), rng.random_range(0.5..20.0)])
            .collect();
        let mut cloud = ParticleCloud::from_statistics(&t)?;
        cloud.prior_log_density = (0..n_particles).map(|_| rng.random_range(-3.0..3.0)).collect();
        let plan = StatisticsPlan::conditioned(rng.random_range(10..1000), 0.01, rng.random_range(0.0..500.0))?;
        let lambda = rng.random_range(1e-3..1.0);
        let (gap, v) = gibbs_variational_gap(lambda, &plan, &cloud, n_perturbations, seed::derive(seed, &format!("cloud-{c}")))?;
        worst = worst.max(gap / v.abs().max(1.0));
    }
    Ok(worst)
}

/// Guaranteed-regime moment check on small varying-spectrum problems with
/// gradient descent step sizes spread over `(0, 2/L)`.
pub fn moment_check(seed: u64, lambdas: &[f64], n_datasets: usize, dataset_size: usize) -> Result<Vec<MomentEstimate>> {
    let mut settings = ProblemSettings::new(5, Family::VaryingSpectrum, seed::derive(seed, "law"));
    settings.l_range = [1.0, 10.0];
    let dist = ProblemDistributionConfig::realize(&settings)?;
    let (mu, ell) = dist.spectrum_bounds();
    let particles: Vec<HyperparameterPoint> = (1..=20).map(|i| HyperparameterPoint::gd(i as f64 * 0.095 * 2.0 / ell)).collect();
    let plan = StatisticsPlan::guaranteed(dataset_size, 0.01, 1.0, 1.0, mu, ell)?;
    let ctx = LearningContext::new(AlgorithmSpec::gd(10), settings.n);
    let draw = |count: usize, s: u64| dist.sample_instances(count, s);
    let setup = MomentCheckSetup {
        plan: &plan,
        particles: &particles,
        ctx: &ctx,
        reference_size: 20_000,
        draw: &draw,
    };
    mc_check_exponential_moment(&setup, lambdas, n_datasets, seed::derive(seed, "moment"))
}

/// Runs the oracle suite; every check records its value and threshold.
pub fn run_verify(seed: u64, prov: &Provenance) -> Result<VerifyReport> {
    let mut checks = Vec::new();

    let gap = gibbs_check(seed, 20, 50, 1000)?;
    checks.push(VerifyCheck {
        name: "gibbs-optimality".into(),
        value: gap,
        threshold: 1e-9,
        pass: gap <= 1e-9,
    });

    for est in moment_check(seed, &[0.1, 0.5, 1.0], 500, 20)? {
        let threshold = 1.0 + 3.0 * est.standard_error;
        checks.push(VerifyCheck {
            name: format!("exponential-moment lambda={}", est.lambda),
            value: est.mean,
            threshold,
            pass: est.within(3.0),
        });
    }

    let cb = covering_bound(DEFAULT_GRID_SIZE as u64, 0.0, 0.01)?;
    let direct = (DEFAULT_GRID_SIZE as f64 / 0.01).ln();
    checks.push(VerifyCheck {
        name: "covering-bound".into(),
        value: cb,
        threshold: direct,
        pass: cb == direct,
    });

    let rows: Vec<String> = checks
        .iter()
        .map(|c| format!("{},{},{},{}", c.name, fmt_float(c.value), fmt_float(c.threshold), c.pass))
        .collect();
    let files = vec![OutputFile::csv("verify.csv", prov, "check,value,threshold,pass", &rows)];
    Ok(VerifyReport { checks, files })
}
