//! Unrolled first-order methods `A(α, x⁰, θ)` with constant hyperparameters.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::ProblemInstance;

pub const STEP_SIZE: &str = "step_size";
pub const MOMENTUM: &str = "momentum";

/// Named hyperparameter values, one particle `α`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperparameterPoint(BTreeMap<String, f64>);

impl HyperparameterPoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn gd(step_size: f64) -> Self {
        Self::new().with(STEP_SIZE, step_size)
    }

    pub fn heavy_ball(step_size: f64, momentum: f64) -> Self {
        Self::new().with(STEP_SIZE, step_size).with(MOMENTUM, momentum)
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingHyperparameter(name.to_string()))
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl fmt::Display for HyperparameterPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.0 {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{k}={v:.6e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "gd")]
    GradientDescent,
    #[serde(rename = "heavy_ball")]
    HeavyBall,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::GradientDescent => "gd",
            Algorithm::HeavyBall => "heavy_ball",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gd" => Ok(Algorithm::GradientDescent),
            "heavy_ball" => Ok(Algorithm::HeavyBall),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }

    pub fn hyperparameter_names(self) -> &'static [&'static str] {
        match self {
            Algorithm::GradientDescent => &[STEP_SIZE],
            Algorithm::HeavyBall => &[STEP_SIZE, MOMENTUM],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    #[serde(rename = "name")]
    pub algorithm: Algorithm,
    pub n_iterations: usize,
}

impl AlgorithmSpec {
    pub fn new(algorithm: Algorithm, n_iterations: usize) -> Result<Self> {
        if n_iterations == 0 {
            return Err(Error::Config("n_iterations must be at least 1".into()));
        }
        Ok(Self {
            algorithm,
            n_iterations,
        })
    }

    pub fn gd(n_iterations: usize) -> Self {
        Self {
            algorithm: Algorithm::GradientDescent,
            n_iterations: n_iterations.max(1),
        }
    }

    pub fn heavy_ball(n_iterations: usize) -> Self {
        Self {
            algorithm: Algorithm::HeavyBall,
            n_iterations: n_iterations.max(1),
        }
    }

    /// Checks that `alpha` carries exactly this algorithm's hyperparameters
    /// and returns `(step_size, momentum)`.
    pub fn resolve(&self, alpha: &HyperparameterPoint) -> Result<(f64, f64)> {
        let names = self.algorithm.hyperparameter_names();
        for name in names {
            alpha.get(name)?;
        }
        if let Some(extra) = alpha.names().find(|n| !names.contains(n)) {
            return Err(Error::InvalidHyperparameter(format!(
                "`{extra}` is not a hyperparameter of {}",
                self.algorithm.name()
            )));
        }
        let tau = alpha.get(STEP_SIZE)?;
        let beta = match self.algorithm {
            Algorithm::GradientDescent => 0.0,
            Algorithm::HeavyBall => alpha.get(MOMENTUM)?,
        };
        if !(tau >= 0.0) || !tau.is_finite() || !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidHyperparameter(format!(
                "step_size and momentum must be finite and non-negative, got {alpha}"
            )));
        }
        Ok((tau, beta))
    }
}

/// Iterates `x⁽⁰⁾..x⁽ᵏ⁾` and their losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub iterates: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
}

impl Trajectory {
    pub fn final_iterate(&self) -> &[f64] {
        self.iterates.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(f64::NAN)
    }

    /// `iteration,loss` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss\n");
        for (k, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{k},{l:.16e}\n"));
        }
        out
    }
}

/// `x − τ∇ℓ(x)`.
pub fn gd_step(x: &[f64], tau: f64, grad: &[f64]) -> Vec<f64> {
    x.iter().zip(grad).map(|(x, g)| x - tau * g).collect()
}

/// Heavy-ball update `x⁽ᵏ⁾ − τ∇ℓ(x⁽ᵏ⁾) + β(x⁽ᵏ⁾ − x⁽ᵏ⁻¹⁾)`.
pub fn hb_step(x_k: &[f64], x_km1: &[f64], alpha: &HyperparameterPoint, grad: &[f64]) -> Result<Vec<f64>> {
    let tau = alpha.get(STEP_SIZE)?;
    let beta = alpha.get(MOMENTUM)?;
    let n = x_k.len();
    for v in [x_km1.len(), grad.len()] {
        if v != n {
            return Err(Error::DimensionMismatch { expected: n, got: v });
        }
    }
    Ok((0..n)
        .map(|i| (x_k[i] - tau * grad[i]) + beta * (x_k[i] - x_km1[i]))
        .collect())
}

/// Runs the method and calls `visit` on every iterate (including `x⁰`).
/// Heavy-ball starts with `x⁽⁻¹⁾ = x⁽⁰⁾`. Non-finite values propagate.
fn run(spec: &AlgorithmSpec, inst: &ProblemInstance, x0: &[f64], tau: f64, beta: f64, mut visit: impl FnMut(&[f64])) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut prev = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut g = vec![0.0; n];
    visit(&x);
    for _ in 0..spec.n_iterations {
        inst.gradient_into(&x, &mut g);
        match spec.algorithm {
            Algorithm::GradientDescent => {
                for i in 0..n {
                    next[i] = x[i] - tau * g[i];
                }
            }
            Algorithm::HeavyBall => {
                for i in 0..n {
                    next[i] = (x[i] - tau * g[i]) + beta * (x[i] - prev[i]);
                }
            }
        }
        std::mem::swap(&mut prev, &mut x);
        std::mem::swap(&mut x, &mut next);
        visit(&x);
    }
}

fn check_x0(inst: &ProblemInstance, x0: &[f64]) -> Result<()> {
    if x0.len() != inst.dim() {
        return Err(Error::DimensionMismatch {
            expected: inst.dim(),
            got: x0.len(),
        });
    }
    Ok(())
}

/// Full trajectory of length `n_iterations + 1`.
pub fn unroll(
    spec: &AlgorithmSpec,
    inst: &ProblemInstance,
    x0: &[f64],
    alpha: &HyperparameterPoint,
) -> Result<Trajectory> {
    check_x0(inst, x0)?;
    let (tau, beta) = spec.resolve(alpha)?;
    let mut iterates = Vec::with_capacity(spec.n_iterations + 1);
    let mut losses = Vec::with_capacity(spec.n_iterations + 1);
    run(spec, inst, x0, tau, beta, |x| {
        losses.push(inst.loss_unchecked(x));
        iterates.push(x.to_vec());
    });
    Ok(Trajectory { iterates, losses })
}

/// Losses along the trajectory without storing iterates.
pub fn loss_curve(
    spec: &AlgorithmSpec,
    inst: &ProblemInstance,
    x0: &[f64],
    alpha: &HyperparameterPoint,
) -> Result<Vec<f64>> {
    check_x0(inst, x0)?;
    let (tau, beta) = spec.resolve(alpha)?;
    let mut losses = Vec::with_capacity(spec.n_iterations + 1);
    run(spec, inst, x0, tau, beta, |x| losses.push(inst.loss_unchecked(x)));
    Ok(losses)
}

/// `ℓ(A(α, θ), θ)`: loss at the final iterate only.
pub fn final_loss(
    spec: &AlgorithmSpec,
    inst: &ProblemInstance,
    x0: &[f64],
    alpha: &HyperparameterPoint,
) -> Result<f64> {
    check_x0(inst, x0)?;
    let (tau, beta) = spec.resolve(alpha)?;
    let mut last = Vec::new();
    let mut k = 0;
    run(spec, inst, x0, tau, beta, |x| {
        if k == spec.n_iterations {
            last = x.to_vec();
        }
        k += 1;
    });
    Ok(inst.loss_unchecked(&last))
}

/// Classical worst-case tuning for spectra in `[μ₋, L₊]`: `2/(L₊+μ₋)` for
/// gradient descent, `τ = (2/(√L₊+√μ₋))²`, `β = ((√L₊−√μ₋)/(√L₊+√μ₋))²` for
/// heavy-ball.
pub fn worst_case_hyperparameters(algorithm: Algorithm, mu_minus: f64, l_plus: f64) -> Result<HyperparameterPoint> {
    if !(mu_minus > 0.0) || !(l_plus >= mu_minus) || !l_plus.is_finite() {
        return Err(Error::InvalidSpectrum {
            mu: mu_minus,
            ell: l_plus,
        });
    }
    Ok(match algorithm {
        Algorithm::GradientDescent => HyperparameterPoint::gd(2.0 / (l_plus + mu_minus)),
        Algorithm::HeavyBall => {
            let (sl, sm) = (l_plus.sqrt(), mu_minus.sqrt());
            let tau = (2.0 / (sl + sm)).powi(2);
            let beta = ((sl - sm) / (sl + sm)).powi(2);
            HyperparameterPoint::heavy_ball(tau, beta)
        }
    })
}

/// Loss contraction factor of `k` gradient steps on a quadratic whose `AᵀA`
/// spectrum lies in `[μ, L]`: `max(|1−τμ|, |1−τL|)^{2k}`.
pub fn gd_contraction_rho(alpha: &HyperparameterPoint, mu: f64, ell: f64, k: usize) -> Result<f64> {
    let tau = alpha.get(STEP_SIZE)?;
    let q = (1.0 - tau * mu).abs().max((1.0 - tau * ell).abs());
    Ok(q.powi(2 * k as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Family, ProblemDistributionConfig, ProblemSettings};
    use crate::seed;

    fn diag(d: &[f64], b: &[f64]) -> ProblemInstance {
        let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
        let mu = sq.iter().copied().fold(f64::INFINITY, f64::min);
        let ell = sq.iter().copied().fold(0.0, f64::max);
        ProblemInstance::diagonal(d.to_vec(), b.to_vec(), mu, ell).unwrap()
    }

    #[test]
    fn hb_step_examples() {
        let x = [1.0, -2.0];
        let xp = [0.5, 3.0];
        let g = [0.25, 4.0];
        let gd = gd_step(&x, 0.3, &g);
        let hb = hb_step(&x, &xp, &HyperparameterPoint::heavy_ball(0.3, 0.0), &g).unwrap();
        assert_eq!(gd, hb);
        let id = hb_step(&x, &xp, &HyperparameterPoint::heavy_ball(0.0, 0.0), &g).unwrap();
        assert_eq!(id, x.to_vec());
        let fixed = hb_step(&x, &x, &HyperparameterPoint::heavy_ball(0.7, 0.9), &[0.0, 0.0]).unwrap();
        assert_eq!(fixed, x.to_vec());
        assert!(matches!(
            hb_step(&x, &xp, &HyperparameterPoint::gd(0.1), &g),
            Err(Error::MissingHyperparameter(_))
        ));
    }

    #[test]
    fn gd_exact_preconditioner() {
        let inst = diag(&[1.0, 1.0, 1.0], &[0.0; 3]);
        let t = unroll(&AlgorithmSpec::gd(1), &inst, &[3.0, -1.0, 2.0], &HyperparameterPoint::gd(1.0)).unwrap();
        assert_eq!(t.iterates.len(), 2);
        assert_eq!(t.final_iterate(), &[0.0, 0.0, 0.0]);
        assert_eq!(t.final_loss(), 0.0);
    }

    #[test]
    fn gd_linear_rate_matches_closed_form() {
        // Eigenvalues of AᵀA are {1, 4}; τ = 2/(L+μ) = 0.4 multiplies both
        // residual components by ±0.6, so the loss shrinks by 0.36 per step.
        let inst = diag(&[1.0, 2.0], &[0.0, 0.0]);
        let t = unroll(&AlgorithmSpec::gd(50), &inst, &[1.0, 1.0], &HyperparameterPoint::gd(0.4)).unwrap();
        let l0 = t.losses[0];
        for (k, l) in t.losses.iter().enumerate() {
            let expected = 0.36f64.powi(k as i32) * l0;
            assert!((l - expected).abs() <= 1e-10 * expected.max(1e-300), "k={k}");
        }
    }

    #[test]
    fn hb_with_zero_momentum_is_gd() {
        let law = ProblemDistributionConfig::realize(&ProblemSettings::new(10, Family::VaryingSpectrum, 1)).unwrap();
        let mut rng = seed::rng(3);
        for _ in 0..20 {
            let inst = law.sample_instance(&mut rng).unwrap();
            let tau = 1.0 / inst.ell();
            let a = unroll(&AlgorithmSpec::gd(50), &inst, &[0.0; 10], &HyperparameterPoint::gd(tau)).unwrap();
            let b = unroll(
                &AlgorithmSpec::heavy_ball(50),
                &inst,
                &[0.0; 10],
                &HyperparameterPoint::heavy_ball(tau, 0.0),
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unroll_validates_inputs() {
        let inst = diag(&[1.0, 2.0], &[1.0, 1.0]);
        let gd = AlgorithmSpec::gd(3);
        assert!(unroll(&gd, &inst, &[0.0], &HyperparameterPoint::gd(0.1)).is_err());
        assert!(unroll(&gd, &inst, &[0.0, 0.0], &HyperparameterPoint::heavy_ball(0.1, 0.2)).is_err());
        assert!(unroll(&gd, &inst, &[0.0, 0.0], &HyperparameterPoint::gd(-0.1)).is_err());
        assert!(matches!(
            unroll(&AlgorithmSpec::heavy_ball(3), &inst, &[0.0, 0.0], &HyperparameterPoint::gd(0.1)),
            Err(Error::MissingHyperparameter(_))
        ));
        assert!(AlgorithmSpec::new(Algorithm::HeavyBall, 0).is_err());
    }

    #[test]
    fn divergence_is_data() {
        let inst = diag(&[10.0], &[1.0]);
        let t = unroll(&AlgorithmSpec::gd(2000), &inst, &[0.0], &HyperparameterPoint::gd(1.0)).unwrap();
        assert!(!t.final_loss().is_finite());
        assert_eq!(t.losses.len(), 2001);
        let f = final_loss(&AlgorithmSpec::gd(2000), &inst, &[0.0], &HyperparameterPoint::gd(1.0)).unwrap();
        assert!(!f.is_finite());
    }

    #[test]
    fn unroll_is_pure() {
        let inst = diag(&[0.5, 1.5, 2.0], &[1.0, -1.0, 0.5]);
        let a = HyperparameterPoint::heavy_ball(0.2, 0.5);
        let s = AlgorithmSpec::heavy_ball(30);
        let t1 = unroll(&s, &inst, &[0.1, 0.2, 0.3], &a).unwrap();
        let t2 = unroll(&s, &inst, &[0.1, 0.2, 0.3], &a).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(final_loss(&s, &inst, &[0.1, 0.2, 0.3], &a).unwrap(), t1.final_loss());
        assert_eq!(loss_curve(&s, &inst, &[0.1, 0.2, 0.3], &a).unwrap(), t1.losses);
    }

    #[test]
    fn worst_case_formulas() {
        let gd = worst_case_hyperparameters(Algorithm::GradientDescent, 3.0, 3.0).unwrap();
        assert!((gd.get(STEP_SIZE).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let hb = worst_case_hyperparameters(Algorithm::HeavyBall, 1.0, 100.0).unwrap();
        assert!((hb.get(STEP_SIZE).unwrap() - 4.0 / 121.0).abs() < 1e-15);
        assert!((hb.get(MOMENTUM).unwrap() - 81.0 / 121.0).abs() < 1e-15);
        let eq = worst_case_hyperparameters(Algorithm::HeavyBall, 7.0, 7.0).unwrap();
        assert_eq!(eq.get(MOMENTUM).unwrap(), 0.0);
        assert!((eq.get(STEP_SIZE).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        assert!(worst_case_hyperparameters(Algorithm::HeavyBall, 0.0, 1.0).is_err());
        assert!(worst_case_hyperparameters(Algorithm::GradientDescent, 2.0, 1.0).is_err());
    }

    #[test]
    fn contraction_examples() {
        assert_eq!(gd_contraction_rho(&HyperparameterPoint::gd(0.0), 1.0, 4.0, 7).unwrap(), 1.0);
        let l = 4.0;
        let r = gd_contraction_rho(&HyperparameterPoint::gd(2.0 / l), 1.0, l, 3).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        let r = gd_contraction_rho(&HyperparameterPoint::gd(0.4), 1.0, 4.0, 1).unwrap();
        assert!((r - 0.36).abs() < 1e-15);
    }

    #[test]
    fn trajectory_csv_has_header() {
        let inst = diag(&[1.0], &[1.0]);
        let t = unroll(&AlgorithmSpec::gd(2), &inst, &[0.0], &HyperparameterPoint::gd(0.5)).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("iteration,loss\n0,5.0000000000000000e-1\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
