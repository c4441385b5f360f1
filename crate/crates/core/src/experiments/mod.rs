//! Experiment runners. Each runner returns its typed summary together with
//! the CSV files it would write; nothing touches the filesystem until
//! [`write_all`] is called.

mod config;
mod output;
mod verify;

pub use config::{ExperimentId, PacSection, PriorSection, RunConfig, SweepSection};
pub use output::{fmt_float, write_all, OutputFile, Provenance};
pub use verify::{gibbs_check, moment_check, run_verify, VerifyCheck, VerifyReport};

use crate::algorithms::{
    loss_curve, worst_case_hyperparameters, Algorithm, AlgorithmSpec, HyperparameterPoint, MOMENTUM, STEP_SIZE,
};
use crate::error::{Error, Result};
use crate::pacbayes::{
    compute_statistics, pac_bound_report, LambdaGrid, LearningContext, PacLearningResult, ParticleCloud, Regime,
    StatisticsPlan,
};
use crate::prior::{build_prior, initial_range, Marginal, PriorBuild, PriorBuildConfig, PriorBuildInputs, PriorSpec};
use crate::problems::{generate_dataset, Dataset, Family, ProblemDistributionConfig, ProblemInstance};
use crate::risk::{initial_loss_second_moment, RiskRecord};
use crate::seed;

/// Below this target the initial step-size range is built as if the target
/// were this value; the range is unbounded as the target goes to 0.
pub const RANGE_TARGET_FLOOR: f64 = 0.1;

/// Realized distribution, dataset and derived constants of a run.
pub struct RunSetup {
    pub config: RunConfig,
    pub distribution: ProblemDistributionConfig,
    pub dataset: Dataset,
    pub x0: Vec<f64>,
    pub mu: f64,
    pub ell: f64,
    pub provenance: Provenance,
}

impl RunSetup {
    /// Uses `dataset` when given (its settings must match the config),
    /// otherwise generates the partitions from the master seed.
    pub fn new(config: &RunConfig, dataset: Option<Dataset>) -> Result<Self> {
        config.validate()?;
        let distribution = ProblemDistributionConfig::realize(&config.problem)?;
        let dataset = match dataset {
            Some(d) => {
                if d.settings != config.problem {
                    return Err(Error::Config("dataset was generated with different problem settings".into()));
                }
                d
            }
            None => generate_dataset(&distribution, &config.partitions.named(), dataset_seed(config.seed))?,
        };
        let (mu, ell) = distribution.spectrum_bounds();
        Ok(Self {
            x0: vec![0.0; config.problem.n],
            distribution,
            dataset,
            mu,
            ell,
            provenance: Provenance {
                config_hash: config.hash(),
                seed: config.seed,
            },
            config: config.clone(),
        })
    }

    fn ctx(&self, spec: AlgorithmSpec) -> LearningContext {
        LearningContext {
            spec,
            x0: self.x0.clone(),
        }
    }

    fn grid(&self) -> Result<LambdaGrid> {
        LambdaGrid::linear(self.config.pac.grid_size)
    }

    /// Both prior partitions, used for the second-moment estimate.
    fn prior_instances(&self) -> Vec<ProblemInstance> {
        let mut v = self.dataset.prior_1().to_vec();
        v.extend_from_slice(self.dataset.prior_2());
        v
    }

    pub fn second_moment(&self) -> Result<f64> {
        let prior = self.prior_instances();
        if prior.is_empty() {
            return Err(Error::Config("the second moment needs a non-empty prior partition".into()));
        }
        initial_loss_second_moment(&prior, &self.x0)
    }

    fn standard(&self) -> Result<HyperparameterPoint> {
        worst_case_hyperparameters(self.config.algorithm.algorithm, self.mu, self.ell)
    }

    fn csv(&self, name: impl Into<String>, header: &str, rows: &[String]) -> OutputFile {
        OutputFile::csv(name, &self.provenance, header, rows)
    }
}

/// Seed the dataset partitions are drawn from.
pub fn dataset_seed(master: u64) -> u64 {
    seed::derive(master, "dataset")
}

/// Generates the dataset described by `config`.
pub fn generate(config: &RunConfig) -> Result<Dataset> {
    config.validate()?;
    let dist = ProblemDistributionConfig::realize(&config.problem)?;
    generate_dataset(&dist, &config.partitions.named(), dataset_seed(config.seed))
}

/// Prior, particle cloud and learning result for one target.
#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub target: Option<f64>,
    pub prior: PriorSpec,
    pub prior_build: Option<PriorBuild>,
    pub cloud: ParticleCloud,
    pub result: PacLearningResult,
}

impl LearnOutcome {
    pub fn argmax(&self) -> &HyperparameterPoint {
        &self.result.argmax_particle
    }
}

fn label(target: f64) -> String {
    format!("{target}")
}

/// Conditioned-regime learning for one convergence target: prior construction
/// on the prior splits, a fresh cloud from the final prior restricted to
/// particles with `p̂ ≥ target` on `prior_2`, then learning on `train`.
pub fn learn_conditioned(setup: &RunSetup, target: f64) -> Result<LearnOutcome> {
    let cfg = &setup.config;
    if cfg.pac.regime != Regime::Conditioned {
        return Err(Error::Config("this run needs pac.regime = \"conditioned\"".into()));
    }
    let ctx = setup.ctx(cfg.algorithm);
    let standard = setup.standard()?;
    let beta_std = standard.get(MOMENTUM).unwrap_or(0.0);
    let threshold = target.max(f64::MIN_POSITIVE);
    let build_cfg = PriorBuildConfig {
        epsilon_conv: threshold,
        iterations: cfg.prior.iterations,
        n_particles: cfg.prior.n_particles,
        keep_fraction: cfg.prior.keep_fraction,
        l_max: setup.ell,
        beta_std: Some(beta_std),
    };
    let range_target = target.max(RANGE_TARGET_FLOOR);
    let mut marginals = std::collections::BTreeMap::new();
    for name in cfg.algorithm.algorithm.hyperparameter_names() {
        let (low, high) = initial_range(name, range_target, setup.ell, beta_std)?;
        marginals.insert(name.to_string(), Marginal::Uniform { low, high });
    }
    let initial = PriorSpec::new(marginals)?;

    let grid = setup.grid()?;
    let m = setup.second_moment()?;
    let train = setup.dataset.train();
    let plan = StatisticsPlan::conditioned(train.len().max(1), cfg.pac.epsilon, m)?
        .with_lambda_count(grid.len())
        .with_posterior_mode(cfg.pac.posterior_mode);
    let inputs = PriorBuildInputs {
        plan: &plan,
        ctx: &ctx,
        grid: &grid,
        prior_1: setup.dataset.prior_1(),
        prior_2: setup.dataset.prior_2(),
    };
    let build = build_prior(&build_cfg, &inputs, Some(initial), seed::derive(cfg.seed, &format!("prior-{}", label(target))))?;

    let mut cloud = build
        .spec
        .sample_cloud(cfg.prior.n_particles, seed::derive(cfg.seed, &format!("posterior-{}", label(target))))?;
    for i in 0..cloud.len() {
        let p = RiskRecord::evaluate(&cloud.particles[i], setup.dataset.prior_2(), &ctx.spec, &ctx.x0)?.p_hat()?;
        if p < threshold {
            cloud.exclude(i);
        }
    }
    if train.is_empty() {
        return Err(Error::Empty("train partition"));
    }
    let cloud = compute_statistics(&plan, &cloud, train, &ctx)?;
    let result = pac_bound_report(&grid, &plan, &cloud)?;
    Ok(LearnOutcome {
        target: Some(target),
        prior: build.spec.clone(),
        prior_build: Some(build),
        cloud,
        result,
    })
}

/// Guaranteed-regime learning with a Gaussian step-size prior for gradient
/// descent with `n_iterations` steps, on a shared particle cloud.
pub fn learn_guaranteed(setup: &RunSetup, cloud: &ParticleCloud, n_iterations: usize) -> Result<LearnOutcome> {
    let cfg = &setup.config;
    if cfg.pac.regime != Regime::Guaranteed {
        return Err(Error::Config("this run needs pac.regime = \"guaranteed\"".into()));
    }
    if cfg.algorithm.algorithm != Algorithm::GradientDescent {
        return Err(Error::UnsupportedRegime(
            "the guaranteed regime needs gradient descent (analytic contraction factor)".into(),
        ));
    }
    let ctx = setup.ctx(AlgorithmSpec::new(Algorithm::GradientDescent, n_iterations)?);
    let grid = setup.grid()?;
    let train = setup.dataset.train();
    if train.is_empty() {
        return Err(Error::Empty("train partition"));
    }
    let plan = StatisticsPlan::guaranteed(train.len(), cfg.pac.epsilon, setup.second_moment()?, cfg.pac.c_const, setup.mu, setup.ell)?
        .with_lambda_count(grid.len())
        .with_posterior_mode(cfg.pac.posterior_mode);
    let cloud = compute_statistics(&plan, cloud, train, &ctx)?;
    let result = pac_bound_report(&grid, &plan, &cloud)?;
    Ok(LearnOutcome {
        target: None,
        prior: gaussian_prior(setup)?,
        prior_build: None,
        cloud,
        result,
    })
}

/// Gaussian step-size prior with mean and spread in units of `1/L`
/// (defaults 1.5 and 0.25).
pub fn gaussian_prior(setup: &RunSetup) -> Result<PriorSpec> {
    let p = &setup.config.prior;
    PriorSpec::gaussian_step_size(
        p.gaussian_mean.unwrap_or(1.5) / setup.ell,
        p.gaussian_std_dev.unwrap_or(0.25) / setup.ell,
    )
}

fn bound_rows(outcomes: &[&LearnOutcome], seed: u64) -> Vec<String> {
    outcomes.iter().map(|o| o.result.csv_row(seed)).collect()
}

fn bounds_file(setup: &RunSetup, outcomes: &[&LearnOutcome]) -> OutputFile {
    setup.csv("bounds.csv", PacLearningResult::CSV_HEADER, &bound_rows(outcomes, setup.config.seed))
}

fn posterior_file(setup: &RunSetup, name: String, outcome: &LearnOutcome) -> OutputFile {
    let names: Vec<&str> = setup.config.algorithm.algorithm.hyperparameter_names().to_vec();
    let header = format!("particle,{},prior_log_density,posterior_weight", names.join(","));
    let rows: Vec<String> = outcome
        .cloud
        .particles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let vals: Vec<String> = names.iter().map(|n| fmt_float(p.get(n).unwrap_or(f64::NAN))).collect();
            format!(
                "{i},{},{},{}",
                vals.join(","),
                fmt_float(outcome.cloud.prior_log_density[i]),
                fmt_float(outcome.result.posterior_weights[i])
            )
        })
        .collect();
    setup.csv(name, &header, &rows)
}

// ---------------------------------------------------------------------------
// posterior convergence

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorConvergenceRow {
    pub n_iterations: usize,
    pub argmax_step_size: f64,
    pub distance: f64,
    pub relative_distance: f64,
    /// Largest step size carrying positive posterior weight.
    pub max_weighted_step_size: f64,
    pub lambda_star: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct PosteriorConvergenceReport {
    pub reference_step_size: f64,
    pub mu: f64,
    pub ell: f64,
    pub rows: Vec<PosteriorConvergenceRow>,
    pub outcomes: Vec<LearnOutcome>,
    pub files: Vec<OutputFile>,
}

pub fn run_posterior_convergence(setup: &RunSetup) -> Result<PosteriorConvergenceReport> {
    let cfg = &setup.config;
    setup.config.require(
        "posterior-convergence needs problem.family = \"fixed-spectrum\"",
        cfg.problem.family == Family::FixedSpectrum,
    )?;
    let prior = gaussian_prior(setup)?;
    let cloud = prior.sample_cloud(cfg.prior.n_particles, seed::derive(cfg.seed, "particles"))?;
    let reference = 2.0 / (setup.ell + setup.mu);

    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    let mut files = Vec::new();
    for &k in &cfg.sweep.n_iterations {
        let out = learn_guaranteed(setup, &cloud, k)?;
        let argmax = out.argmax().get(STEP_SIZE)?;
        let max_weighted = out
            .cloud
            .particles
            .iter()
            .zip(&out.result.posterior_weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(p, _)| p.get(STEP_SIZE).unwrap_or(f64::NAN))
            .fold(f64::NEG_INFINITY, f64::max);
        rows.push(PosteriorConvergenceRow {
            n_iterations: k,
            argmax_step_size: argmax,
            distance: (argmax - reference).abs(),
            relative_distance: (argmax - reference).abs() / reference,
            max_weighted_step_size: max_weighted,
            lambda_star: out.result.lambda_star,
            bound: out.result.bound,
        });
        files.push(posterior_file(setup, format!("posterior_nit{k}.csv"), &out));
        outcomes.push(out);
    }
    let summary: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                r.n_iterations,
                fmt_float(r.argmax_step_size),
                fmt_float(reference),
                fmt_float(r.distance),
                fmt_float(r.relative_distance),
                fmt_float(r.max_weighted_step_size),
                fmt_float(2.0 / setup.ell),
                fmt_float(r.lambda_star),
                fmt_float(r.bound)
            )
        })
        .collect();
    files.push(setup.csv(
        "posterior_summary.csv",
        "n_iterations,argmax_step_size,reference_step_size,distance,relative_distance,max_weighted_step_size,two_over_l,lambda_star,bound",
        &summary,
    ));
    files.push(bounds_file(setup, &outcomes.iter().collect::<Vec<_>>()));
    Ok(PosteriorConvergenceReport {
        reference_step_size: reference,
        mu: setup.mu,
        ell: setup.ell,
        rows,
        outcomes,
        files,
    })
}

// ---------------------------------------------------------------------------
// conditioning

/// Per-iteration mean and median loss over a set of instances.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
}

impl LossCurve {
    pub fn compute(
        spec: &AlgorithmSpec,
        instances: &[ProblemInstance],
        x0: &[f64],
        alpha: &HyperparameterPoint,
    ) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Empty("instances for the loss curve"));
        }
        let curves = instances
            .iter()
            .map(|inst| loss_curve(spec, inst, x0, alpha))
            .collect::<Result<Vec<_>>>()?;
        let len = spec.n_iterations + 1;
        let mut mean = Vec::with_capacity(len);
        let mut median = Vec::with_capacity(len);
        let mut col = vec![0.0; curves.len()];
        for k in 0..len {
            for (c, curve) in col.iter_mut().zip(&curves) {
                *c = curve[k];
            }
            mean.push(col.iter().sum::<f64>() / col.len() as f64);
            col.sort_by(f64::total_cmp);
            let h = col.len() / 2;
            median.push(if col.len() % 2 == 1 { col[h] } else { 0.5 * (col[h - 1] + col[h]) });
        }
        Ok(Self { mean, median })
    }

    fn rows(&self) -> Vec<String> {
        self.mean
            .iter()
            .zip(&self.median)
            .enumerate()
            .map(|(k, (a, b))| format!("{k},{},{}", fmt_float(*a), fmt_float(*b)))
            .collect()
    }
}

const CURVE_HEADER: &str = "iteration,mean_loss,median_loss";

#[derive(Debug, Clone)]
pub struct ConditioningTarget {
    pub target: f64,
    pub outcome: LearnOutcome,
    pub curve: LossCurve,
}

#[derive(Debug, Clone)]
pub struct ConditioningReport {
    pub standard: HyperparameterPoint,
    pub standard_curve: LossCurve,
    pub targets: Vec<ConditioningTarget>,
    pub files: Vec<OutputFile>,
}

fn require_conditioned_setting(setup: &RunSetup, name: &str) -> Result<()> {
    let cfg = &setup.config;
    cfg.require(
        &format!("{name} needs problem.family = \"varying-spectrum\""),
        cfg.problem.family == Family::VaryingSpectrum,
    )?;
    cfg.require(
        &format!("{name} needs pac.regime = \"conditioned\""),
        cfg.pac.regime == Regime::Conditioned,
    )?;
    cfg.require(&format!("{name} needs at least one prior target"), !cfg.prior.targets.is_empty())
}

fn hyper_cols(alpha: &HyperparameterPoint) -> String {
    let tau = alpha.get(STEP_SIZE).unwrap_or(f64::NAN);
    let beta = alpha.get(MOMENTUM).unwrap_or(0.0);
    format!("{},{}", fmt_float(tau), fmt_float(beta))
}

pub fn run_conditioning(setup: &RunSetup) -> Result<ConditioningReport> {
    require_conditioned_setting(setup, "conditioning")?;
    let cfg = &setup.config;
    let test = setup.dataset.test();
    let standard = setup.standard()?;
    let standard_curve = LossCurve::compute(&cfg.algorithm, test, &setup.x0, &standard)?;

    let mut targets = Vec::new();
    for &t in &cfg.prior.targets {
        let outcome = learn_conditioned(setup, t)?;
        let curve = LossCurve::compute(&cfg.algorithm, test, &setup.x0, outcome.argmax())?;
        targets.push(ConditioningTarget { target: t, outcome, curve });
    }

    let mut files = vec![setup.csv("conditioning_standard.csv", CURVE_HEADER, &standard_curve.rows())];
    for t in &targets {
        files.push(setup.csv(format!("conditioning_learned_{}.csv", label(t.target)), CURVE_HEADER, &t.curve.rows()));
    }
    let mut summary = vec![format!(
        "standard,{},{},{}",
        hyper_cols(&standard),
        fmt_float(*standard_curve.mean.last().unwrap()),
        fmt_float(*standard_curve.median.last().unwrap())
    )];
    for t in &targets {
        summary.push(format!(
            "{},{},{},{}",
            label(t.target),
            hyper_cols(t.outcome.argmax()),
            fmt_float(*t.curve.mean.last().unwrap()),
            fmt_float(*t.curve.median.last().unwrap())
        ));
    }
    files.push(setup.csv(
        "conditioning_summary.csv",
        "target,step_size,momentum,final_mean_loss,final_median_loss",
        &summary,
    ));
    files.push(bounds_file(setup, &targets.iter().map(|t| &t.outcome).collect::<Vec<_>>()));
    Ok(ConditioningReport {
        standard,
        standard_curve,
        targets,
        files,
    })
}

// ---------------------------------------------------------------------------
// convergence probability

#[derive(Debug, Clone, PartialEq)]
pub struct ConvProbRow {
    pub target: f64,
    pub test_set: usize,
    pub p_hat: f64,
}

#[derive(Debug, Clone)]
pub struct ConvProbReport {
    pub rows: Vec<ConvProbRow>,
    pub outcomes: Vec<LearnOutcome>,
    pub files: Vec<OutputFile>,
}

pub fn run_conv_prob(setup: &RunSetup) -> Result<ConvProbReport> {
    require_conditioned_setting(setup, "conv-prob")?;
    let cfg = &setup.config;
    cfg.require(
        "conv-prob needs positive sweep.n_test_sets and sweep.test_set_size",
        cfg.sweep.n_test_sets > 0 && cfg.sweep.test_set_size > 0,
    )?;
    let test_sets = (0..cfg.sweep.n_test_sets)
        .map(|j| {
            setup
                .distribution
                .sample_instances(cfg.sweep.test_set_size, seed::derive(cfg.seed, &format!("conv-prob-test-{j}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for &t in &cfg.prior.targets {
        let outcome = learn_conditioned(setup, t)?;
        for (j, set) in test_sets.iter().enumerate() {
            let p = RiskRecord::evaluate(outcome.argmax(), set, &cfg.algorithm, &setup.x0)?.p_hat()?;
            rows.push(ConvProbRow {
                target: t,
                test_set: j,
                p_hat: p,
            });
        }
        outcomes.push(outcome);
    }
    let lines: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{}", label(r.target), r.test_set, fmt_float(r.p_hat)))
        .collect();
    let files = vec![
        setup.csv("conv_prob.csv", "target,test_set,p_hat", &lines),
        bounds_file(setup, &outcomes.iter().collect::<Vec<_>>()),
    ];
    Ok(ConvProbReport { rows, outcomes, files })
}

// ---------------------------------------------------------------------------
// PAC bound

#[derive(Debug, Clone)]
pub struct PacBoundReport {
    pub target: f64,
    pub bound: f64,
    /// Mean final test loss of the argmax particle.
    pub learned_test_mean: f64,
    /// Mean over the converged test instances (the quantity the bound controls).
    pub learned_conditioned_mean: f64,
    pub learned_p_hat: f64,
    pub standard_test_mean: f64,
    /// Posterior-weighted mean test loss, when requested.
    pub posterior_test_mean: Option<f64>,
    pub learned_losses: Vec<f64>,
    pub standard_losses: Vec<f64>,
    pub outcome: LearnOutcome,
    pub files: Vec<OutputFile>,
}

pub fn run_pac_bound(setup: &RunSetup) -> Result<PacBoundReport> {
    require_conditioned_setting(setup, "pac-bound")?;
    let cfg = &setup.config;
    let target = cfg.prior.targets[0];
    let test = setup.dataset.test();
    if test.is_empty() {
        return Err(Error::Empty("test partition"));
    }
    let outcome = learn_conditioned(setup, target)?;
    let learned = RiskRecord::evaluate(outcome.argmax(), test, &cfg.algorithm, &setup.x0)?;
    let standard = RiskRecord::evaluate(&setup.standard()?, test, &cfg.algorithm, &setup.x0)?;
    let learned_p_hat = learned.p_hat()?;
    let learned_conditioned_mean = learned.converged_mean().unwrap_or(f64::NAN);

    let posterior_test_mean = if cfg.pac.report_posterior_mean {
        let mut total = 0.0;
        for (i, w) in outcome.result.posterior_weights.iter().enumerate() {
            if *w > 0.0 {
                let r = RiskRecord::evaluate(&outcome.cloud.particles[i], test, &cfg.algorithm, &setup.x0)?;
                total += w * r.converged_mean().unwrap_or(f64::NAN);
            }
        }
        Some(total)
    } else {
        None
    };

    let hist: Vec<String> = learned
        .final_losses
        .iter()
        .zip(&standard.final_losses)
        .enumerate()
        .map(|(i, (a, b))| format!("{i},{},{}", fmt_float(*a), fmt_float(*b)))
        .collect();
    let mut header = String::from(
        "epsilon_conv,bound,learned_test_mean,learned_conditioned_mean,learned_p_hat,standard_test_mean",
    );
    let mut row = format!(
        "{},{},{},{},{},{}",
        label(target),
        fmt_float(outcome.result.bound),
        fmt_float(learned.empirical_risk()?),
        fmt_float(learned_conditioned_mean),
        fmt_float(learned_p_hat),
        fmt_float(standard.empirical_risk()?)
    );
    if let Some(m) = posterior_test_mean {
        header.push_str(",posterior_test_mean");
        row.push(',');
        row.push_str(&fmt_float(m));
    }
    let files = vec![
        setup.csv("pac_bound_losses.csv", "instance,learned_loss,standard_loss", &hist),
        setup.csv("pac_bound_summary.csv", &header, &[row]),
        bounds_file(setup, &[&outcome]),
    ];
    Ok(PacBoundReport {
        target,
        bound: outcome.result.bound,
        learned_test_mean: learned.empirical_risk()?,
        learned_conditioned_mean,
        learned_p_hat,
        standard_test_mean: standard.empirical_risk()?,
        posterior_test_mean,
        learned_losses: learned.final_losses,
        standard_losses: standard.final_losses,
        outcome,
        files,
    })
}

// ---------------------------------------------------------------------------
// dispatch

/// Runs `id` and returns the files it produces.
pub fn run_experiment(id: ExperimentId, setup: &RunSetup) -> Result<Vec<OutputFile>> {
    Ok(match id {
        ExperimentId::PosteriorConvergence => run_posterior_convergence(setup)?.files,
        ExperimentId::Conditioning => run_conditioning(setup)?.files,
        ExperimentId::ConvProb => run_conv_prob(setup)?.files,
        ExperimentId::PacBound => run_pac_bound(setup)?.files,
    })
}

/// One learning run in the configured regime: the conditioned regime uses the
/// first prior target, the guaranteed regime the Gaussian step-size prior.
pub fn run_learn(setup: &RunSetup) -> Result<(LearnOutcome, Vec<OutputFile>)> {
    let cfg = &setup.config;
    let outcome = match cfg.pac.regime {
        Regime::Conditioned => {
            let t = *cfg
                .prior
                .targets
                .first()
                .ok_or_else(|| Error::Config("prior.targets is empty".into()))?;
            learn_conditioned(setup, t)?
        }
        Regime::Guaranteed => {
            let prior = gaussian_prior(setup)?;
            let cloud = prior.sample_cloud(cfg.prior.n_particles, seed::derive(cfg.seed, "particles"))?;
            learn_guaranteed(setup, &cloud, cfg.algorithm.n_iterations)?
        }
    };
    let files = vec![
        posterior_file(setup, "posterior.csv".into(), &outcome),
        bounds_file(setup, &[&outcome]),
    ];
    Ok((outcome, files))
}
