use super::*;
use crate::algorithms::{worst_case_hyperparameters, AlgorithmSpec};
use proptest::prelude::*;

fn flat_plan(second_moment: f64) -> StatisticsPlan {
    StatisticsPlan::conditioned(1, 0.01, second_moment).unwrap()
}

fn naive_kappa(lambda: f64, plan: &StatisticsPlan, t: &[[f64; 2]]) -> f64 {
    let eta = plan.eta(lambda);
    let s: f64 = t.iter().map(|t| (eta[0] * t[0] + eta[1] * t[1]).exp()).sum();
    (s / t.len() as f64).ln()
}

fn diag_instance(d: &[f64], b: &[f64]) -> ProblemInstance {
    let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
    let mu = sq.iter().copied().fold(f64::INFINITY, f64::min);
    let ell = sq.iter().copied().fold(0.0, f64::max);
    ProblemInstance::diagonal(d.to_vec(), b.to_vec(), mu, ell).unwrap()
}

#[test]
fn eta_scales_per_regime() {
    let g = StatisticsPlan::guaranteed(200, 0.01, 100.0, 2.0, 1.0, 4.0).unwrap();
    assert_eq!(g.eta2_scale(), 4.0 * 100.0 / 200.0);
    let eta = g.eta(0.1);
    assert_eq!(eta[0], 0.1);
    assert!((eta[1] + 0.01).abs() < 1e-17);
    let c = StatisticsPlan::conditioned(200, 0.01, 100.0).unwrap();
    assert_eq!(c.eta2_scale(), 0.5);
}

#[test]
fn plan_validation() {
    assert!(StatisticsPlan::conditioned(0, 0.01, 1.0).is_err());
    assert!(StatisticsPlan::conditioned(5, 0.0, 1.0).is_err());
    assert!(StatisticsPlan::conditioned(5, 0.01, -1.0).is_err());
    assert!(StatisticsPlan::guaranteed(5, 0.01, 1.0, 1.0, 0.0, 1.0).is_err());
}

#[test]
fn kappa_matches_naive_sum() {
    let t = [[-1.0, 2.0], [-0.5, 1.0], [-3.0, 1.5], [-0.25, 4.0]];
    let cloud = ParticleCloud::from_statistics(&t).unwrap();
    let plan = flat_plan(3.0);
    for lambda in [1e-3, 0.1, 0.5, 1.0] {
        let k = kappa_tilde(lambda, &plan, &cloud).unwrap();
        assert!((k - naive_kappa(lambda, &plan, &t)).abs() < 1e-12);
    }
}

#[test]
fn kappa_stays_finite_where_naive_overflows() {
    let t = [[-1e6, 1.0], [-2e6, 1.0]];
    let cloud = ParticleCloud::from_statistics(&t).unwrap();
    let plan = flat_plan(0.0);
    let k = kappa_tilde(1.0, &plan, &cloud).unwrap();
    assert!(naive_kappa(1.0, &plan, &t).is_infinite());
    let expected = -1e6 + (0.5 * (1.0 + (-1e6f64).exp())).ln();
    assert!((k - expected).abs() < 1e-9);
}

#[test]
fn objective_is_f_of_kappa() {
    let t = [[-1.0, 2.0], [-0.5, 1.0]];
    let cloud = ParticleCloud::from_statistics(&t).unwrap();
    let plan = flat_plan(1.0).with_lambda_count(10);
    let lambda = 0.3;
    let f = objective_f(lambda, &plan, &cloud).unwrap();
    let expected = -(naive_kappa(lambda, &plan, &t) - (10.0f64 / 0.01).ln()) / lambda;
    assert!((f - expected).abs() < 1e-12);
}

#[test]
fn three_particle_gibbs_weights() {
    // prior (1,1,2)/4, inner products (0, ln 2, 0) at λ = 1
    let t = [[0.0, 0.0], [2.0f64.ln(), 0.0], [0.0, 0.0]];
    let mut cloud = ParticleCloud::from_statistics(&t).unwrap();
    cloud.prior_log_density = vec![0.25f64.ln(), 0.25f64.ln(), 0.5f64.ln()];
    let plan = flat_plan(0.0);
    let w = gibbs_posterior(1.0, &plan, &cloud).unwrap();
    for (a, b) in w.iter().zip([0.2, 0.4, 0.4]) {
        assert!((a - b).abs() < 1e-15, "{w:?}");
    }
    let is = gibbs_posterior(1.0, &plan.clone().with_posterior_mode(PosteriorMode::Importance), &cloud).unwrap();
    for (a, b) in is.iter().zip([0.25, 0.5, 0.25]) {
        assert!((a - b).abs() < 1e-15);
    }
    let grid = LambdaGrid::new(vec![1.0]).unwrap();
    let report = pac_bound_report(&grid, &plan, &cloud).unwrap();
    assert_eq!(report.argmax_index, 1, "tie between 1 and 2 goes to the lower index");
}

#[test]
fn excluded_particles_get_zero_weight() {
    let t = [[-1.0, 1.0], [-2.0, 1.0], [-3.0, 1.0]];
    let mut cloud = ParticleCloud::from_statistics(&t).unwrap();
    cloud.exclude(0);
    let w = gibbs_posterior(0.5, &flat_plan(1.0), &cloud).unwrap();
    assert_eq!(w[0], 0.0);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    cloud.exclude(1);
    cloud.exclude(2);
    assert!(matches!(gibbs_posterior(0.5, &flat_plan(1.0), &cloud), Err(Error::AllExcluded)));
    assert!(matches!(kappa_tilde(0.5, &flat_plan(1.0), &cloud), Err(Error::AllExcluded)));
}

#[test]
fn grid_validation_and_linear_grid() {
    let g = LambdaGrid::linear(4).unwrap();
    assert_eq!(g.values(), &[0.25, 0.5, 0.75, 1.0]);
    assert!(LambdaGrid::new(vec![]).is_err());
    assert!(LambdaGrid::new(vec![0.0, 0.5]).is_err());
    assert!(LambdaGrid::new(vec![0.5, 0.5]).is_err());
    assert!(LambdaGrid::new(vec![0.5, 1.5]).is_err());
}

#[test]
fn single_particle_grid_minimizer_near_closed_form() {
    // F(λ) = r + λ·s·t₂/2 + c/λ, minimized at sqrt(2c/(s·t₂))
    let t = [[-3.0, 2.0]];
    let cloud = ParticleCloud::from_statistics(&t).unwrap();
    let plan = StatisticsPlan::conditioned(1000, 0.01, 50_000.0).unwrap();
    let grid = LambdaGrid::linear(DEFAULT_GRID_SIZE).unwrap();
    let (lambda, f) = grid_search_lambda(&grid, &plan, &cloud).unwrap();
    let c = (DEFAULT_GRID_SIZE as f64 / 0.01).ln();
    let opt = (2.0 * c / (plan.eta2_scale() * 2.0)).sqrt();
    assert!(opt < 1.0);
    assert!((lambda - opt).abs() <= 1.0 / DEFAULT_GRID_SIZE as f64);
    let f_opt = 3.0 + opt * plan.eta2_scale() + c / opt;
    assert!(f >= f_opt - 1e-9);
}

#[test]
fn grid_search_decreasing_objective_picks_last() {
    let cloud = ParticleCloud::from_statistics(&[[0.0, 0.0]]).unwrap();
    let plan = flat_plan(0.0);
    let grid = LambdaGrid::new(vec![0.5, 1.0]).unwrap();
    // κ̃ = 0, F = log(2/ε)/λ, strictly decreasing, so λ* = 1
    let (lambda, _) = grid_search_lambda(&grid, &plan, &cloud).unwrap();
    assert_eq!(lambda, 1.0);
}

#[test]
fn covering_bound_examples() {
    let plan = flat_plan(0.0);
    assert_eq!(covering_bound(25_000, 0.0, 0.01).unwrap(), plan.log_term());
    assert_eq!(covering_bound(1, 0.0, 0.5).unwrap(), 2.0f64.ln());
    assert!(covering_bound(0, 0.0, 0.5).is_err());
    assert!(covering_bound(3, -1.0, 0.5).is_err());
}

#[test]
fn guaranteed_statistics_use_rho_squared() {
    let inst = diag_instance(&[1.0, 2.0], &[1.0, -1.0]);
    let plan = StatisticsPlan::guaranteed(1, 0.01, 1.0, 1.0, 1.0, 4.0).unwrap();
    let good = worst_case_hyperparameters(Algorithm::GradientDescent, 1.0, 4.0).unwrap();
    let bad = HyperparameterPoint::gd(1.0);
    let cloud = ParticleCloud::new(vec![good, bad], vec![0.0, 0.0]).unwrap();
    let ctx = LearningContext::new(AlgorithmSpec::gd(1), 2);
    let out = compute_statistics(&plan, &cloud, &[inst], &ctx).unwrap();
    assert!((out.statistics[0].t[1] - 0.1296).abs() < 1e-15);
    assert!(!out.statistics[0].excluded);
    assert!(out.statistics[1].excluded, "rho > 1 is outside the support");

    let hb = LearningContext::new(AlgorithmSpec::heavy_ball(1), 2);
    let err = compute_statistics(&plan, &cloud, &[diag_instance(&[1.0], &[1.0])], &hb).unwrap_err();
    assert!(matches!(err, Error::UnsupportedRegime(_)));
}

#[test]
fn conditioned_statistics_exclude_zero_p() {
    let inst = vec![diag_instance(&[1.0, 2.0], &[1.0, -1.0]), diag_instance(&[1.0, 1.0], &[2.0, 0.0])];
    let plan = StatisticsPlan::conditioned(2, 0.01, 1.0).unwrap();
    // τ = 1 solves the second instance exactly and diverges on the first (|1−4| = 3)
    let cloud = ParticleCloud::new(
        vec![HyperparameterPoint::gd(0.25), HyperparameterPoint::gd(1.0), HyperparameterPoint::gd(5.0)],
        vec![0.0; 3],
    )
    .unwrap();
    let ctx = LearningContext::new(AlgorithmSpec::gd(30), 2);
    let out = compute_statistics(&plan, &cloud, &inst, &ctx).unwrap();
    assert_eq!(out.statistics[0].p_hat, Some(1.0));
    assert_eq!(out.statistics[0].t[1], 1.0);
    assert_eq!(out.statistics[1].p_hat, Some(0.5));
    assert_eq!(out.statistics[1].t[1], 4.0);
    assert_eq!(out.statistics[1].t[0], -0.0);
    assert_eq!(out.statistics[2].p_hat, Some(0.0));
    assert!(out.statistics[2].excluded);

    let mut restricted = cloud.clone();
    restricted.exclude(0);
    let out = compute_statistics(&plan, &restricted, &inst, &ctx).unwrap();
    assert!(out.statistics[0].excluded, "earlier exclusions are kept");
    assert!(!out.statistics[1].excluded);
}

#[test]
fn gibbs_beats_random_perturbations() {
    let t: Vec<[f64; 2]> = (0..40).map(|i| [-(i as f64 * 0.37).sin() * 5.0, 1.0 + (i % 7) as f64]).collect();
    let mut cloud = ParticleCloud::from_statistics(&t).unwrap();
    cloud.prior_log_density = (0..40).map(|i| -(i as f64) * 0.05).collect();
    let plan = flat_plan(0.3);
    assert!(check_gibbs_optimality(0.7, &plan, &cloud, 500, 9).unwrap());
    let (gap, _) = gibbs_variational_gap(0.7, &plan, &cloud, 500, 9).unwrap();
    assert!(gap < 0.0 || gap.abs() < 1e-12);
}

#[test]
fn moment_check_deterministic_problem_is_at_most_one() {
    let inst = diag_instance(&[1.0, 1.5], &[2.0, -1.0]);
    let draw = move |count: usize, _seed: u64| -> Result<Vec<ProblemInstance>> { Ok(vec![inst.clone(); count]) };
    let particles = vec![HyperparameterPoint::gd(0.2), HyperparameterPoint::gd(0.5), HyperparameterPoint::gd(0.7)];
    let plan = StatisticsPlan::conditioned(10, 0.01, 1.0).unwrap();
    let ctx = LearningContext::new(AlgorithmSpec::gd(5), 2);
    let setup = MomentCheckSetup {
        plan: &plan,
        particles: &particles,
        ctx: &ctx,
        reference_size: 10,
        draw: &draw,
    };
    let est = mc_check_exponential_moment(&setup, &[1e-20, 0.5, 1.0], 5, 1).unwrap();
    assert!((est[0].mean - 1.0).abs() < 1e-12);
    for e in &est {
        assert!(e.mean <= 1.0 + 1e-15);
        assert_eq!(e.standard_error, 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn posterior_is_a_distribution(
        t in prop::collection::vec((-50.0f64..0.0, 0.0f64..10.0), 1..30),
        lambda in 1e-4f64..1.0,
        m in 0.0f64..100.0,
    ) {
        let t: Vec<[f64; 2]> = t.into_iter().map(|(a, b)| [a, b]).collect();
        let cloud = ParticleCloud::from_statistics(&t).unwrap();
        let w = gibbs_posterior(lambda, &flat_plan(m), &cloud).unwrap();
        prop_assert!(w.iter().all(|w| *w >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_shifts_with_risk_offset(
        t in prop::collection::vec((-50.0f64..0.0, 0.0f64..10.0), 1..20),
        shift in -10.0f64..10.0,
        lambda in 1e-3f64..1.0,
    ) {
        let base: Vec<[f64; 2]> = t.iter().map(|(a, b)| [*a, *b]).collect();
        let shifted: Vec<[f64; 2]> = t.iter().map(|(a, b)| [*a + shift, *b]).collect();
        let plan = flat_plan(2.0);
        let k0 = kappa_tilde(lambda, &plan, &ParticleCloud::from_statistics(&base).unwrap()).unwrap();
        let k1 = kappa_tilde(lambda, &plan, &ParticleCloud::from_statistics(&shifted).unwrap()).unwrap();
        prop_assert!((k1 - k0 - lambda * shift).abs() < 1e-9);
    }
}
