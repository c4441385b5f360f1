//! Random quadratic problems `½‖Ax − b‖²`.
//!
//! Two families are supported:
//!
//! * **fixed spectrum**: one dense matrix `A` shared by every instance, only the
//!   right-hand side `b` varies. `μ` and `L` are the extreme eigenvalues of `AᵀA`,
//!   computed once when the matrix is built.
//! * **varying spectrum**: a diagonal `A` whose entries interpolate linearly
//!   between `√μ` and `√L` (randomly permuted), with `L` drawn uniformly per
//!   instance and `μ` held fixed.
//!
//! In both families `b` is drawn from `N(m, ΣᵀΣ)`.

mod dataset;

pub use dataset::{generate_dataset, Dataset, Partition, PartitionSizes};

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Which problem family to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    FixedSpectrum,
    VaryingSpectrum,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::FixedSpectrum => "fixed-spectrum",
            Family::VaryingSpectrum => "varying-spectrum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed-spectrum" => Some(Family::FixedSpectrum),
            "varying-spectrum" => Some(Family::VaryingSpectrum),
            _ => None,
        }
    }
}

/// Serializable knobs from which a [`ProblemDistributionConfig`] is realized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSettings {
    pub n: usize,
    pub family: Family,
    #[serde(default = "default_mu_fixed")]
    pub mu_fixed: f64,
    #[serde(default = "default_l_range")]
    pub l_range: [f64; 2],
    /// Seed for the distribution itself (right-hand-side mean and covariance,
    /// and the shared matrix of the fixed-spectrum family).
    pub seed: u64,
}

fn default_mu_fixed() -> f64 {
    0.05
}

fn default_l_range() -> [f64; 2] {
    [1.0, 5000.0]
}

impl ProblemSettings {
    pub fn new(n: usize, family: Family, seed: u64) -> Self {
        Self {
            n,
            family,
            mu_fixed: default_mu_fixed(),
            l_range: default_l_range(),
            seed,
        }
    }
}

/// A dense matrix with its Gram matrix and cached spectrum bounds.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    n: usize,
    /// Row-major `A`.
    matrix: Vec<f64>,
    /// `AᵀA`, symmetric, stored row-major.
    gram: Vec<f64>,
    mu: f64,
    ell: f64,
}

impl DenseOperator {
    /// Wraps `matrix` and computes `μ, L` as the extreme eigenvalues of `AᵀA`.
    /// Rejects matrices whose Gram matrix is (numerically) singular.
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::InvalidDimension(format!(
                "expected a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let gram = matrix.transpose() * matrix;
        let eig = SymmetricEigen::new(gram.clone());
        let mu = eig.eigenvalues.min();
        let ell = eig.eigenvalues.max();
        if !(ell > 0.0) || !(mu > ell * n as f64 * f64::EPSILON) || !mu.is_finite() {
            return Err(Error::InvalidSpectrum { mu, ell });
        }
        let row_major = |m: &DMatrix<f64>| {
            let mut out = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    out.push(m[(i, j)]);
                }
            }
            out
        };
        Ok(Self {
            n,
            matrix: row_major(matrix),
            gram: row_major(&gram),
            mu,
            ell,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.n..(i + 1) * self.n]
    }

    fn gram_row(&self, i: usize) -> &[f64] {
        &self.gram[i * self.n..(i + 1) * self.n]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.matrix)
    }
}

/// Matrix part of a problem instance.
#[derive(Debug, Clone)]
pub enum Operator {
    Dense(Arc<DenseOperator>),
    Diagonal(Vec<f64>),
}

/// One quadratic task `θ = (A, b)` with its spectrum bounds.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    operator: Operator,
    rhs: Vec<f64>,
    /// `Aᵀb`, cached for the gradient.
    atb: Vec<f64>,
    mu: f64,
    ell: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ProblemInstance {
    pub fn dense(operator: Arc<DenseOperator>, rhs: Vec<f64>) -> Result<Self> {
        let n = operator.dim();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut atb = vec![0.0; n];
        for (i, &bi) in rhs.iter().enumerate() {
            for (acc, &a) in atb.iter_mut().zip(operator.row(i)) {
                *acc += a * bi;
            }
        }
        Ok(Self {
            mu: operator.mu(),
            ell: operator.ell(),
            operator: Operator::Dense(operator),
            rhs,
            atb,
        })
    }

    /// Diagonal instance with explicitly stated spectrum bounds. Every entry
    /// must satisfy `√μ ≤ d_i ≤ √L` up to rounding.
    pub fn diagonal(diag: Vec<f64>, rhs: Vec<f64>, mu: f64, ell: f64) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidDimension("empty diagonal".into()));
        }
        if rhs.len() != diag.len() {
            return Err(Error::DimensionMismatch {
                expected: diag.len(),
                got: rhs.len(),
            });
        }
        if !(mu > 0.0) || !(ell >= mu) || !ell.is_finite() {
            return Err(Error::InvalidSpectrum { mu, ell });
        }
        let tol = 1e-12;
        let (lo, hi) = (mu.sqrt() * (1.0 - tol), ell.sqrt() * (1.0 + tol));
        if diag.iter().any(|d| !(*d >= lo && *d <= hi)) {
            return Err(Error::InvalidSpectrum { mu, ell });
        }
        let atb = diag.iter().zip(&rhs).map(|(d, b)| d * b).collect();
        Ok(Self {
            operator: Operator::Diagonal(diag),
            rhs,
            atb,
            mu,
            ell,
        })
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `½‖Ax − b‖²`.
    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.loss_unchecked(x))
    }

    /// `AᵀAx − Aᵀb`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        Ok(g)
    }

    pub(crate) fn loss_unchecked(&self, x: &[f64]) -> f64 {
        let sq = match &self.operator {
            Operator::Diagonal(d) => d
                .iter()
                .zip(x)
                .zip(&self.rhs)
                .map(|((d, x), b)| {
                    let r = d * x - b;
                    r * r
                })
                .sum::<f64>(),
            Operator::Dense(op) => (0..op.dim())
                .map(|i| {
                    let r = dot(op.row(i), x) - self.rhs[i];
                    r * r
                })
                .sum::<f64>(),
        };
        0.5 * sq
    }

    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.operator {
            Operator::Diagonal(d) => {
                for i in 0..x.len() {
                    out[i] = d[i] * d[i] * x[i] - self.atb[i];
                }
            }
            Operator::Dense(op) => {
                for i in 0..x.len() {
                    out[i] = dot(op.gram_row(i), x) - self.atb[i];
                }
            }
        }
    }

    /// Exact minimizer `A⁻¹b`, available for the diagonal family.
    pub fn diagonal_solution(&self) -> Option<Vec<f64>> {
        match &self.operator {
            Operator::Diagonal(d) => Some(self.rhs.iter().zip(d).map(|(b, d)| b / d).collect()),
            Operator::Dense(_) => None,
        }
    }

    /// Eigenvalues of `AᵀA` in ascending order.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut eig = match &self.operator {
            Operator::Diagonal(d) => d.iter().map(|d| d * d).collect::<Vec<_>>(),
            Operator::Dense(op) => {
                let gram = DMatrix::from_row_slice(op.n, op.n, &op.gram);
                SymmetricEigen::new(gram).eigenvalues.iter().copied().collect()
            }
        };
        eig.sort_by(f64::total_cmp);
        eig
    }
}

/// Dense `n×n` matrix with entries `U{−10,…,10} + N(0, 1)`.
pub fn make_fixed_spectrum_matrix(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    let mut rng = seed::rng(seed);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let base = rng.random_range(-10i32..=10) as f64;
            let noise: f64 = rng.sample(StandardNormal);
            m[(i, j)] = base + noise;
        }
    }
    Ok(m)
}

/// Diagonal entries interpolating linearly from `√μ` to `√L`, randomly permuted.
pub fn make_varying_spectrum_instance(
    mu: f64,
    ell: f64,
    n: usize,
    rhs: Vec<f64>,
    seed: u64,
) -> Result<ProblemInstance> {
    if !(mu > 0.0) || !(ell >= mu) || !ell.is_finite() {
        return Err(Error::InvalidSpectrum { mu, ell });
    }
    if n == 0 || (n == 1 && mu != ell) {
        return Err(Error::InvalidDimension(format!(
            "cannot interpolate [{mu}, {ell}] with n = {n}"
        )));
    }
    let (lo, hi) = (mu.sqrt(), ell.sqrt());
    let mut diag: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / (n - 1) as f64)
            }
        })
        .collect();
    diag.shuffle(&mut seed::rng(seed));
    ProblemInstance::diagonal(diag, rhs, mu, ell)
}

/// A realized problem distribution: right-hand-side law plus matrix recipe.
#[derive(Debug, Clone)]
pub struct ProblemDistributionConfig {
    pub settings: ProblemSettings,
    pub rhs_mean: DVector<f64>,
    pub rhs_cov: DMatrix<f64>,
    rhs_factor: DMatrix<f64>,
    fixed: Option<Arc<DenseOperator>>,
}

impl ProblemDistributionConfig {
    /// Draws the mean and `Σ` entries from `U{−5,…,5}` and sets the covariance
    /// to `ΣᵀΣ`; for the fixed family also draws the shared matrix.
    pub fn realize(settings: &ProblemSettings) -> Result<Self> {
        let n = settings.n;
        if n == 0 {
            return Err(Error::InvalidDimension("n must be at least 1".into()));
        }
        let mut rng = seed::rng_for(settings.seed, "rhs-law");
        let rhs_mean = DVector::from_fn(n, |_, _| rng.random_range(-5i32..=5) as f64);
        let sigma = DMatrix::from_fn(n, n, |_, _| rng.random_range(-5i32..=5) as f64);
        let rhs_cov = sigma.transpose() * &sigma;
        let fixed = match settings.family {
            Family::FixedSpectrum => {
                let m = make_fixed_spectrum_matrix(n, seed::derive(settings.seed, "matrix"))?;
                Some(Arc::new(DenseOperator::new(&m)?))
            }
            Family::VaryingSpectrum => None,
        };
        Self::from_parts(settings.clone(), rhs_mean, rhs_cov, fixed)
    }

    /// Builds a distribution from an explicit right-hand-side law.
    pub fn from_parts(
        settings: ProblemSettings,
        rhs_mean: DVector<f64>,
        rhs_cov: DMatrix<f64>,
        fixed: Option<Arc<DenseOperator>>,
    ) -> Result<Self> {
        let n = settings.n;
        if rhs_mean.len() != n || rhs_cov.nrows() != n || rhs_cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rhs_mean.len(),
            });
        }
        if settings.family == Family::VaryingSpectrum {
            let [lo, hi] = settings.l_range;
            if !(settings.mu_fixed > 0.0) || !(lo >= settings.mu_fixed) || !(hi >= lo) {
                return Err(Error::InvalidSpectrum {
                    mu: settings.mu_fixed,
                    ell: lo,
                });
            }
        }
        if settings.family == Family::FixedSpectrum && fixed.is_none() {
            return Err(Error::Config("fixed-spectrum family needs a matrix".into()));
        }
        let rhs_factor = Cholesky::new(rhs_cov.clone())
            .ok_or(Error::Factorization)?
            .l();
        Ok(Self {
            settings,
            rhs_mean,
            rhs_cov,
            rhs_factor,
            fixed,
        })
    }

    pub fn n(&self) -> usize {
        self.settings.n
    }

    pub fn fixed_operator(&self) -> Option<&Arc<DenseOperator>> {
        self.fixed.as_ref()
    }

    /// Bounds `(μ₋, L₊)` covering every instance the distribution can produce.
    pub fn spectrum_bounds(&self) -> (f64, f64) {
        match &self.fixed {
            Some(op) => (op.mu(), op.ell()),
            None => (self.settings.mu_fixed, self.settings.l_range[1]),
        }
    }

    fn draw_rhs<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.n(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.rhs_mean + &self.rhs_factor * z).iter().copied().collect()
    }

    /// Draws one instance from the stream `rng`.
    pub fn sample_instance<R: Rng>(&self, rng: &mut R) -> Result<ProblemInstance> {
        let rhs = self.draw_rhs(rng);
        match &self.fixed {
            Some(op) => ProblemInstance::dense(Arc::clone(op), rhs),
            None => {
                let [lo, hi] = self.settings.l_range;
                let ell = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                let perm_seed = rng.random::<u64>();
                make_varying_spectrum_instance(self.settings.mu_fixed, ell, self.n(), rhs, perm_seed)
            }
        }
    }

    /// Draws `count` instances from a fresh stream seeded by `seed`.
    pub fn sample_instances(&self, count: usize, seed: u64) -> Result<Vec<ProblemInstance>> {
        let mut rng = seed::rng(seed);
        (0..count).map(|_| self.sample_instance(&mut rng)).collect()
    }
}

/// `count` i.i.d. draws from `N(rhs_mean, rhs_cov)`.
pub fn sample_rhs(config: &ProblemDistributionConfig, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed);
    (0..count).map(|_| config.draw_rhs(&mut rng)).collect()
}
