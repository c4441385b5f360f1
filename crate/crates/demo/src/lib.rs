//! WebAssembly bindings for a single-page demo. Each export returns a flat
//! `Float64Array`; the layouts are documented on the native functions.

use pacopt::experiments::{
    gaussian_prior, learn_conditioned, learn_guaranteed, LossCurve, RunConfig, RunSetup,
};
use pacopt::pacbayes::{objective_f, StatisticsPlan};
use pacopt::algorithms::STEP_SIZE;
use pacopt::seed;
use pacopt::{Error, Result};
use wasm_bindgen::prelude::*;

fn guaranteed_config(n_iterations: usize, n_particles: usize, seed: u64) -> Result<RunConfig> {
    RunConfig::from_toml(&format!(
        r#"
seed = {seed}

[problem]
n = 20
family = "fixed-spectrum"
seed = {seed}

[algorithm]
name = "gd"
n_iterations = {n_iterations}

[pac]
regime = "guaranteed"
grid_size = 2000
posterior_mode = "importance"

[prior]
n_particles = {n_particles}

[partitions]
prior_1 = 50
prior_2 = 0
train = 100
test = 0
"#
    ))
}

fn conditioned_config(target: f64, seed: u64) -> Result<RunConfig> {
    RunConfig::from_toml(&format!(
        r#"
seed = {seed}

[problem]
n = 20
family = "varying-spectrum"
l_range = [1.0, 500.0]
seed = {seed}

[algorithm]
name = "heavy_ball"
n_iterations = 40

[pac]
regime = "conditioned"
grid_size = 2000

[prior]
targets = [{target:?}]
n_particles = 60

[partitions]
prior_1 = 40
prior_2 = 40
train = 80
test = 60
"#
    ))
}

/// Guaranteed-regime posterior over GD step sizes.
/// Layout: `[step_size * L / 2, weight]` per particle, sorted by step size.
pub fn posterior_over_step_sizes(n_iterations: usize, n_particles: usize, seed: u64) -> Result<Vec<f64>> {
    let setup = RunSetup::new(&guaranteed_config(n_iterations, n_particles, seed)?, None)?;
    let cloud = gaussian_prior(&setup)?.sample_cloud(n_particles, seed::derive(seed, "particles"))?;
    let out = learn_guaranteed(&setup, &cloud, n_iterations)?;
    let mut pairs = out
        .cloud
        .particles
        .iter()
        .zip(&out.result.posterior_weights)
        .map(|(p, w)| Ok((p.get(STEP_SIZE)? * setup.ell / 2.0, *w)))
        .collect::<Result<Vec<_>>>()?;
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().flat_map(|(x, w)| [x, w]).collect())
}

/// Objective `F(λ)` of the guaranteed regime over `count` evenly spaced
/// values in `(0, 1]`. Layout: `[lambda, F]` pairs.
pub fn bound_objective(n_iterations: usize, count: usize, seed: u64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::Empty("lambda count"));
    }
    let cfg = guaranteed_config(n_iterations, 100, seed)?;
    let setup = RunSetup::new(&cfg, None)?;
    let cloud = gaussian_prior(&setup)?.sample_cloud(100, seed::derive(seed, "particles"))?;
    let out = learn_guaranteed(&setup, &cloud, n_iterations)?;
    let plan = StatisticsPlan::guaranteed(
        setup.dataset.train().len(),
        cfg.pac.epsilon,
        setup.second_moment()?,
        cfg.pac.c_const,
        setup.mu,
        setup.ell,
    )?
    .with_lambda_count(cfg.pac.grid_size);
    let mut v = Vec::with_capacity(2 * count);
    for i in 1..=count {
        let lambda = i as f64 / count as f64;
        v.push(lambda);
        v.push(objective_f(lambda, &plan, &out.cloud)?);
    }
    Ok(v)
}

/// Mean test loss per iteration for worst-case-tuned and learned heavy ball.
/// Layout: `[standard..., learned...]`, two curves of equal length.
pub fn loss_curves(target: f64, seed: u64) -> Result<Vec<f64>> {
    let setup = RunSetup::new(&conditioned_config(target, seed)?, None)?;
    let out = learn_conditioned(&setup, target)?;
    let spec = &setup.config.algorithm;
    let test = setup.dataset.test();
    let standard = pacopt::algorithms::worst_case_hyperparameters(spec.algorithm, setup.mu, setup.ell)?;
    let a = LossCurve::compute(spec, test, &setup.x0, &standard)?;
    let b = LossCurve::compute(spec, test, &setup.x0, out.argmax())?;
    Ok(a.mean.into_iter().chain(b.mean).collect())
}

fn js(e: Error) -> JsError {
    JsError::new(&format!("{} ({})", e, e.kind()))
}

#[wasm_bindgen(js_name = posteriorOverStepSizes)]
pub fn posterior_over_step_sizes_js(n_iterations: usize, n_particles: usize, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    posterior_over_step_sizes(n_iterations, n_particles, seed as u64).map_err(js)
}

#[wasm_bindgen(js_name = boundObjective)]
pub fn bound_objective_js(n_iterations: usize, count: usize, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    bound_objective(n_iterations, count, seed as u64).map_err(js)
}

#[wasm_bindgen(js_name = lossCurves)]
pub fn loss_curves_js(target: f64, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    loss_curves(target, seed as u64).map_err(js)
}
