//! Empirical risks, the convergence set and the convergence probability.
//!
//! An instance `θ` is in the convergence set of `α` when the final loss is
//! finite and does not exceed the initial loss. Sums run left to right over
//! the stored instance order.

use crate::algorithms::{final_loss, AlgorithmSpec, HyperparameterPoint};
use crate::error::{Error, Result};
use crate::problems::ProblemInstance;

/// Per-instance outcome of running one hyperparameter point on a list of
/// instances.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRecord {
    pub final_losses: Vec<f64>,
    pub converged: Vec<bool>,
    pub initial_losses: Vec<f64>,
}

impl RiskRecord {
    pub fn evaluate(
        alpha: &HyperparameterPoint,
        instances: &[ProblemInstance],
        spec: &AlgorithmSpec,
        x0: &[f64],
    ) -> Result<Self> {
        let mut rec = RiskRecord {
            final_losses: Vec::with_capacity(instances.len()),
            converged: Vec::with_capacity(instances.len()),
            initial_losses: Vec::with_capacity(instances.len()),
        };
        for inst in instances {
            let init = inst.loss(x0)?;
            let fin = final_loss(spec, inst, x0, alpha)?;
            rec.converged.push(is_converged(fin, init));
            rec.final_losses.push(fin);
            rec.initial_losses.push(init);
        }
        Ok(rec)
    }

    pub fn len(&self) -> usize {
        self.final_losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.final_losses.is_empty()
    }

    /// Mean final loss; non-finite if any run diverged.
    pub fn empirical_risk(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::Empty("no instances"));
        }
        Ok(self.final_losses.iter().sum::<f64>() / self.len() as f64)
    }

    pub fn p_hat(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::Empty("no instances"));
        }
        Ok(self.n_converged() as f64 / self.len() as f64)
    }

    pub fn n_converged(&self) -> usize {
        self.converged.iter().filter(|c| **c).count()
    }

    /// `(1/p̂)·(1/N)·Σ 1_C(θᵢ)·ℓᵢ`.
    pub fn convergence_risk(&self, p_hat: f64) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::Empty("no instances"));
        }
        if !(p_hat > 0.0) {
            return Err(Error::UndefinedRisk);
        }
        let sum: f64 = self
            .final_losses
            .iter()
            .zip(&self.converged)
            .filter(|(_, c)| **c)
            .map(|(l, _)| *l)
            .sum();
        Ok(sum / self.len() as f64 / p_hat)
    }

    /// Mean final loss over the converged instances only (`None` if none
    /// converged). Equals the convergence risk with `p̂` taken on the same set.
    pub fn converged_mean(&self) -> Option<f64> {
        let n = self.n_converged();
        (n > 0).then(|| {
            self.final_losses
                .iter()
                .zip(&self.converged)
                .filter(|(_, c)| **c)
                .map(|(l, _)| *l)
                .sum::<f64>()
                / n as f64
        })
    }
}

fn is_converged(final_loss: f64, initial_loss: f64) -> bool {
    final_loss.is_finite() && final_loss <= initial_loss
}

/// `R̂(α, D) = (1/N) Σ ℓ(A(α, θᵢ), θᵢ)`.
pub fn empirical_risk(
    alpha: &HyperparameterPoint,
    instances: &[ProblemInstance],
    spec: &AlgorithmSpec,
    x0: &[f64],
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Empty("no instances"));
    }
    RiskRecord::evaluate(alpha, instances, spec, x0)?.empirical_risk()
}

pub fn converged(alpha: &HyperparameterPoint, inst: &ProblemInstance, spec: &AlgorithmSpec, x0: &[f64]) -> Result<bool> {
    let init = inst.loss(x0)?;
    Ok(is_converged(final_loss(spec, inst, x0, alpha)?, init))
}

/// Binomial estimate `N_conv / N` of the convergence probability.
pub fn estimate_p(
    alpha: &HyperparameterPoint,
    instances: &[ProblemInstance],
    spec: &AlgorithmSpec,
    x0: &[f64],
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Empty("no instances"));
    }
    RiskRecord::evaluate(alpha, instances, spec, x0)?.p_hat()
}

pub fn empirical_convergence_risk(
    alpha: &HyperparameterPoint,
    instances: &[ProblemInstance],
    spec: &AlgorithmSpec,
    x0: &[f64],
    p_hat: f64,
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Empty("no instances"));
    }
    if !(p_hat > 0.0) {
        return Err(Error::UndefinedRisk);
    }
    RiskRecord::evaluate(alpha, instances, spec, x0)?.convergence_risk(p_hat)
}

/// Plug-in estimate of `E[ℓ(x⁰, S)²]`.
pub fn initial_loss_second_moment(instances: &[ProblemInstance], x0: &[f64]) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Empty("no instances"));
    }
    let mut sum = 0.0;
    for inst in instances {
        let l = inst.loss(x0)?;
        sum += l * l;
    }
    Ok(sum / instances.len() as f64)
}

/// Monte-Carlo estimate of `E[exp(−λ(X − E[X]))]` with its standard error,
/// using the sample mean for `E[X]`.
pub fn lower_tail_mgf(samples: &[f64], lambda: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::Empty("need at least two samples"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let vals: Vec<f64> = samples.iter().map(|x| (-lambda * (x - mean)).exp()).collect();
    let m = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    Ok((m, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{AlgorithmSpec, HyperparameterPoint};
    use crate::problems::{Family, ProblemDistributionConfig, ProblemSettings};

    fn diag(d: &[f64], b: &[f64]) -> ProblemInstance {
        let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
        let mu = sq.iter().copied().fold(f64::INFINITY, f64::min);
        let ell = sq.iter().copied().fold(0.0, f64::max);
        ProblemInstance::diagonal(d.to_vec(), b.to_vec(), mu, ell).unwrap()
    }

    fn record(losses: &[f64], init: f64) -> RiskRecord {
        RiskRecord {
            final_losses: losses.to_vec(),
            converged: losses.iter().map(|l| is_converged(*l, init)).collect(),
            initial_losses: vec![init; losses.len()],
        }
    }

    #[test]
    fn risk_arithmetic() {
        assert_eq!(record(&[0.0, 0.0], 5.0).empirical_risk().unwrap(), 0.0);
        assert_eq!(record(&[1.0, 3.0], 5.0).empirical_risk().unwrap(), 2.0);
        assert!(!record(&[1.0, f64::INFINITY], 5.0).empirical_risk().unwrap().is_finite());
        assert!(record(&[], 1.0).empirical_risk().is_err());
    }

    #[test]
    fn convergence_risk_arithmetic() {
        let r = record(&[1.0, f64::INFINITY], 5.0);
        assert_eq!(r.convergence_risk(0.5).unwrap(), 1.0);
        let all = record(&[1.0, 2.0, 4.0], 5.0);
        assert_eq!(all.convergence_risk(1.0).unwrap(), all.empirical_risk().unwrap());
        let none = record(&[f64::NAN, 9.0], 5.0);
        assert_eq!(none.convergence_risk(0.3).unwrap(), 0.0);
        assert!(matches!(r.convergence_risk(0.0), Err(Error::UndefinedRisk)));
    }

    #[test]
    fn p_hat_arithmetic() {
        let mut losses = vec![1.0; 180];
        losses.extend(vec![10.0; 20]);
        assert_eq!(record(&losses, 5.0).p_hat().unwrap(), 0.9);
        assert_eq!(record(&[1.0, 2.0], 5.0).p_hat().unwrap(), 1.0);
        assert_eq!(record(&[6.0, f64::NAN], 5.0).p_hat().unwrap(), 0.0);
    }

    #[test]
    fn converged_boundaries() {
        let inst = diag(&[1.0, 2.0], &[1.0, 1.0]);
        let x0 = [0.0, 0.0];
        // τ = 0: final equals initial, inclusive.
        assert!(converged(&HyperparameterPoint::gd(0.0), &inst, &AlgorithmSpec::gd(50), &x0).unwrap());
        assert!(converged(&HyperparameterPoint::gd(0.4), &inst, &AlgorithmSpec::gd(50), &x0).unwrap());
        // τ = 10/L multiplies the top residual by |1 − 10| per step.
        assert!(!converged(&HyperparameterPoint::gd(10.0 / 4.0), &inst, &AlgorithmSpec::gd(50), &x0).unwrap());
    }

    #[test]
    fn estimators_over_instances() {
        let insts = vec![diag(&[1.0], &[1.0]), diag(&[3.0], &[1.0])];
        let spec = AlgorithmSpec::gd(20);
        // τ = 0.3: factor |1 − 0.3| on the first, |1 − 2.7| on the second.
        let a = HyperparameterPoint::gd(0.3);
        assert_eq!(estimate_p(&a, &insts, &spec, &[0.0]).unwrap(), 0.5);
        let r = empirical_convergence_risk(&a, &insts, &spec, &[0.0], 0.5).unwrap();
        let l1 = 0.5 * 0.7f64.powi(40);
        assert!((r - l1).abs() < 1e-15);
        assert!(empirical_risk(&a, &[], &spec, &[0.0]).is_err());
        assert!(estimate_p(&a, &[], &spec, &[0.0]).is_err());
        assert!(matches!(
            empirical_convergence_risk(&a, &insts, &spec, &[0.0], 0.0),
            Err(Error::UndefinedRisk)
        ));
    }

    #[test]
    fn second_moment_examples() {
        let zeros = vec![diag(&[1.0, 2.0], &[0.0, 0.0]); 3];
        assert_eq!(initial_loss_second_moment(&zeros, &[0.0, 0.0]).unwrap(), 0.0);
        // ½‖b‖² ∈ {1, 2}.
        let insts = vec![diag(&[1.0], &[2f64.sqrt()]), diag(&[1.0], &[2.0])];
        let m = initial_loss_second_moment(&insts, &[0.0]).unwrap();
        assert!((m - 2.5).abs() < 1e-14);
        assert!(initial_loss_second_moment(&[], &[0.0]).is_err());
    }

    #[test]
    fn second_moment_matches_direct_sum() {
        let law = ProblemDistributionConfig::realize(&ProblemSettings::new(8, Family::VaryingSpectrum, 5)).unwrap();
        let insts = law.sample_instances(100, 1).unwrap();
        let x0 = vec![0.0; 8];
        let direct: f64 = insts
            .iter()
            .map(|i| {
                let l = 0.5 * i.rhs().iter().map(|b| b * b).sum::<f64>();
                l * l
            })
            .sum::<f64>()
            / 100.0;
        let m = initial_loss_second_moment(&insts, &x0).unwrap();
        assert!((m - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn p_hat_in_unit_interval_and_permutation_invariant() {
        let law = ProblemDistributionConfig::realize(&ProblemSettings::new(10, Family::VaryingSpectrum, 8)).unwrap();
        let mut insts = law.sample_instances(40, 2).unwrap();
        let spec = AlgorithmSpec::heavy_ball(50);
        let x0 = vec![0.0; 10];
        for tau in [1e-4, 1e-3, 3e-3, 1e-2] {
            let a = HyperparameterPoint::heavy_ball(tau, 0.9);
            let rec = RiskRecord::evaluate(&a, &insts, &spec, &x0).unwrap();
            let p = rec.p_hat().unwrap();
            assert!((0.0..=1.0).contains(&p));
            let mut flags: Vec<(Vec<f64>, bool)> =
                insts.iter().map(|i| i.rhs().to_vec()).zip(rec.converged.iter().copied()).collect();
            insts.reverse();
            let rev = RiskRecord::evaluate(&a, &insts, &spec, &x0).unwrap();
            let mut flags_rev: Vec<(Vec<f64>, bool)> =
                insts.iter().map(|i| i.rhs().to_vec()).zip(rev.converged.iter().copied()).collect();
            flags.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            flags_rev.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            assert_eq!(flags, flags_rev);
        }
    }

    #[test]
    fn sub_gaussian_lower_tail() {
        // Final losses of short gradient runs, rescaled to O(1) so the
        // exponential moment is informative.
        let law = ProblemDistributionConfig::realize(&ProblemSettings::new(5, Family::VaryingSpectrum, 3)).unwrap();
        let insts = law.sample_instances(20_000, 4).unwrap();
        let spec = AlgorithmSpec::gd(5);
        let a = HyperparameterPoint::gd(1e-3);
        let rec = RiskRecord::evaluate(&a, &insts, &spec, &[0.0; 5]).unwrap();
        let scale = rec.empirical_risk().unwrap();
        let xs: Vec<f64> = rec.final_losses.iter().map(|l| l / scale).collect();
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        for lambda in [0.1, 1.0, 5.0] {
            let (mgf, se) = lower_tail_mgf(&xs, lambda).unwrap();
            let rhs = (lambda * lambda / 2.0 * m2).exp();
            assert!(mgf <= rhs * (1.0 + 3.0 * se / mgf), "λ={lambda}: {mgf} vs {rhs}");
        }
    }
}
