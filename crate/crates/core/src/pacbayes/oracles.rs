//! Numerical checks of the learning machinery: the exponential-moment
//! inequality `E[c(λ)] ≤ 1` by Monte Carlo and the variational optimality of the
//! Gibbs posterior on a discrete support.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::{log_sum_exp, LearningContext, ParticleCloud, PosteriorMode, Regime, StatisticsPlan};
use crate::algorithms::{gd_contraction_rho, HyperparameterPoint};
use crate::error::{Error, Result};
use crate::problems::ProblemInstance;
use crate::risk::{initial_loss_second_moment, RiskRecord};
use crate::seed;

/// Inputs of the Monte Carlo moment check. `plan.n` is the dataset size.
pub struct MomentCheckSetup<'a> {
    pub plan: &'a StatisticsPlan,
    pub particles: &'a [HyperparameterPoint],
    pub ctx: &'a LearningContext,
    /// Size of the held-out sample used for the population risk, `p` and `m`.
    pub reference_size: usize,
    /// `draw(count, seed)` returns `count` i.i.d. problem instances.
    pub draw: &'a dyn Fn(usize, u64) -> Result<Vec<ProblemInstance>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub lambda: f64,
    pub mean: f64,
    pub standard_error: f64,
    pub n_datasets: usize,
}

impl MomentEstimate {
    /// `mean ≤ 1 + k·SE`.
    pub fn within(&self, k: f64) -> bool {
        self.mean <= 1.0 + k * self.standard_error
    }
}

struct Reference {
    risk: f64,
    p: f64,
    t2: f64,
}

/// Estimates `E_{D_N}[c(λ)]` with
/// `c(λ) = E_prior[exp(λ(R − R̂) − λ²/2·s·T′)]` for each requested `λ`.
///
/// The population risk, `p` and `E[ℓ(x⁰)²]` come from a reference sample.
/// Particles outside the regime's support (`ρ > 1` or `p = 0`) are dropped.
pub fn mc_check_exponential_moment(
    setup: &MomentCheckSetup<'_>,
    lambdas: &[f64],
    n_datasets: usize,
    seed: u64,
) -> Result<Vec<MomentEstimate>> {
    if n_datasets == 0 {
        return Err(Error::Empty("datasets"));
    }
    let plan = setup.plan;
    let ctx = setup.ctx;
    let reference = (setup.draw)(setup.reference_size, seed::derive(seed, "reference"))?;
    if reference.is_empty() {
        return Err(Error::Empty("reference sample"));
    }
    let m = initial_loss_second_moment(&reference, &ctx.x0)?;
    let s = match plan.regime {
        Regime::Guaranteed => plan.c_const * plan.c_const * m / plan.n as f64,
        Regime::Conditioned => m / plan.n as f64,
    };

    let mut refs: Vec<(usize, Reference)> = Vec::new();
    for (i, alpha) in setup.particles.iter().enumerate() {
        let rec = RiskRecord::evaluate(alpha, &reference, &ctx.spec, &ctx.x0)?;
        match plan.regime {
            Regime::Guaranteed => {
                let (mu, ell) = plan
                    .spectrum
                    .ok_or_else(|| Error::UnsupportedRegime("guaranteed regime needs spectrum bounds".into()))?;
                let rho = gd_contraction_rho(alpha, mu, ell, ctx.spec.n_iterations)?;
                if rho <= 1.0 {
                    let risk = rec.empirical_risk()?;
                    refs.push((i, Reference { risk, p: 1.0, t2: rho * rho }));
                }
            }
            Regime::Conditioned => {
                let p = rec.p_hat()?;
                if p > 0.0 {
                    let risk = rec.convergence_risk(p)?;
                    refs.push((i, Reference { risk, p, t2: 1.0 / (p * p) }));
                }
            }
        }
    }
    if refs.is_empty() {
        return Err(Error::AllExcluded);
    }

    // diffs[d][j] = R(α_j) − R̂(α_j, D_d)
    let mut diffs = Vec::with_capacity(n_datasets);
    for d in 0..n_datasets {
        let data = (setup.draw)(plan.n, seed::derive(seed, &format!("dataset-{d}")))?;
        let mut row = Vec::with_capacity(refs.len());
        for (i, r) in &refs {
            let rec = RiskRecord::evaluate(&setup.particles[*i], &data, &ctx.spec, &ctx.x0)?;
            let est = match plan.regime {
                Regime::Guaranteed => rec.empirical_risk()?,
                Regime::Conditioned => rec.convergence_risk(r.p)?,
            };
            row.push(r.risk - est);
        }
        diffs.push(row);
    }

    let log_k = (refs.len() as f64).ln();
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            let c: Vec<f64> = diffs
                .iter()
                .map(|row| {
                    let terms: Vec<f64> = row
                        .iter()
                        .zip(&refs)
                        .map(|(d, (_, r))| lambda * d - 0.5 * lambda * lambda * s * r.t2)
                        .collect();
                    (log_sum_exp(&terms) - log_k).exp()
                })
                .collect();
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            let var = if c.len() > 1 {
                c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            MomentEstimate {
                lambda,
                mean,
                standard_error: (var / n).sqrt(),
                n_datasets,
            }
        })
        .collect())
}

/// `V(Q) = Σ qᵢ aᵢ − Σ qᵢ log(qᵢ/pᵢ)` from log weights.
fn variational_value(log_q: &[f64], log_p: &[f64], a: &[f64]) -> f64 {
    log_q
        .iter()
        .zip(log_p)
        .zip(a)
        .filter(|((lq, _), _)| lq.is_finite())
        .map(|((lq, lp), ai)| lq.exp() * (ai - lq + lp))
        .sum()
}

fn normalize_logs(v: &mut [f64]) {
    let z = log_sum_exp(v);
    for x in v.iter_mut() {
        *x -= z;
    }
}

/// Largest `V(Q) − V(Q_Gibbs)` over random distributions `Q` on the retained
/// support. Perturbations alternate between log-normal tilts of the Gibbs
/// weights at several scales and flat Dirichlet draws.
pub fn gibbs_variational_gap(
    lambda: f64,
    plan: &StatisticsPlan,
    cloud: &ParticleCloud,
    n_perturbations: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let idx: Vec<usize> = cloud.retained().collect();
    if idx.is_empty() {
        return Err(Error::AllExcluded);
    }
    let eta = plan.eta(lambda);
    let a: Vec<f64> = idx.iter().map(|&i| cloud.inner(i, eta)).collect();
    let mut log_p: Vec<f64> = idx
        .iter()
        .map(|&i| match plan.posterior_mode {
            PosteriorMode::PriorWeighted => cloud.prior_log_density[i],
            PosteriorMode::Importance => 0.0,
        })
        .collect();
    normalize_logs(&mut log_p);
    let mut log_g: Vec<f64> = log_p.iter().zip(&a).map(|(p, a)| p + a).collect();
    normalize_logs(&mut log_g);
    let v_gibbs = variational_value(&log_g, &log_p, &a);

    let mut rng = seed::rng_for(seed, "gibbs-perturbation");
    let scales = [1e-6, 1e-3, 1e-1, 1.0, 10.0];
    let mut worst = f64::NEG_INFINITY;
    let mut log_q = vec![0.0; idx.len()];
    for k in 0..n_perturbations {
        if k % 2 == 0 {
            let sigma = scales[(k / 2) % scales.len()];
            for (q, g) in log_q.iter_mut().zip(&log_g) {
                let z: f64 = rng.sample(StandardNormal);
                *q = g + sigma * z;
            }
        } else {
            for q in log_q.iter_mut() {
                let e: f64 = rng.sample(Exp1);
                *q = e.ln();
            }
        }
        normalize_logs(&mut log_q);
        let gap = variational_value(&log_q, &log_p, &a) - v_gibbs;
        if gap > worst {
            worst = gap;
        }
    }
    Ok((worst, v_gibbs))
}

/// True when no perturbation beats the Gibbs posterior by more than
/// `1e-9·max(1, |V(Q_Gibbs)|)`.
pub fn check_gibbs_optimality(
    lambda: f64,
    plan: &StatisticsPlan,
    cloud: &ParticleCloud,
    n_perturbations: usize,
    seed: u64,
) -> Result<bool> {
    let (gap, v) = gibbs_variational_gap(lambda, plan, cloud, n_perturbations, seed)?;
    Ok(gap <= 1e-9 * v.abs().max(1.0))
}
