use nalgebra::DMatrix;
use rand::Rng;
use taskexp::dynamics::Trajectory;
use taskexp::harness::tools::oed_demo;
use taskexp::linalg;
use taskexp::live::LiveSystem;
use taskexp::oed::{
    dynamic_oed, learn_exp_policies, DesignObjective, ExplorationPolicy, LearnExpConfig, MinEigConfig, RegretOracle,
    ThompsonConfig, ThompsonMpcOracle, Warmup,
};
use taskexp::scenarios::{Scenario, ScenarioConfig};
use taskexp::seed::rng_seeded;

fn warmed(scenario: &Scenario, extra: usize, seed: u64) -> LiveSystem<f64> {
    let warm = scenario.config.warmup_episodes;
    let mut live = LiveSystem::new(scenario.truth.clone(), warm + extra, seed);
    let gauss = ExplorationPolicy::Gaussian { d_u: scenario.truth.d_u(), sigma: scenario.random_sigma(), seed };
    for i in 0..warm {
        live.play(gauss.runner(i as u64).as_mut()).unwrap();
    }
    live
}

fn light_thompson(candidates: usize, scenario: &Scenario) -> ThompsonConfig {
    let mut cfg = scenario.config.exploration.thompson.clone();
    cfg.mpc.n_candidates = candidates;
    cfg
}

fn near_goal_steps(log: &[Trajectory<f64>]) -> usize {
    log.iter().flat_map(|t| t.states.iter()).filter(|x| (x[0] - 10.0).abs() < 0.1).count()
}

#[test]
fn replayed_policies_reproduce_their_covariance_in_distribution() {
    let drone = Scenario::builtin("drone").unwrap();
    let mut live = warmed(&drone, 1, 21);
    let policy = {
        let mut oracle = ThompsonMpcOracle::new(&mut live, light_thompson(32, &drone), rng_seeded(2)).unwrap();
        let xi = -DMatrix::identity(10, 10);
        oracle.run(&xi, 1).unwrap().remove(0).policy
    };
    let mut probe_rng = rng_seeded(5);
    let probe = DMatrix::from_fn(10, 10, |_, _| probe_rng.random_range(-1.0..1.0));
    let batch = |seed: u64| -> Vec<f64> {
        let mut fresh = LiveSystem::new(drone.truth.clone(), 25, seed);
        (0..25)
            .map(|i| {
                let t = fresh.play(policy.runner(i).as_mut()).unwrap();
                linalg::frob_inner(&t.covariance(drone.truth.phi()), &probe)
            })
            .collect()
    };
    let (a, b) = (batch(100), batch(200));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let se = (var(&a) / 25.0 + var(&b) / 25.0).sqrt();
    assert!((mean(&a) - mean(&b)).abs() <= 3.0 * se, "{} vs {} (se {se})", mean(&a), mean(&b));
}

#[test]
fn min_eig_design_grows_linearly_with_the_budget_on_the_drone() {
    let drone = Scenario::builtin("drone").unwrap();
    let achieved = |k: usize| {
        let mut live = warmed(&drone, 4 * k, 31);
        let mut oracle = ThompsonMpcOracle::new(&mut live, light_thompson(64, &drone), rng_seeded(6)).unwrap();
        let out = dynamic_oed(&DesignObjective::reg_trace_inverse(1.0), 3, k, &mut oracle, &Warmup::Oracle).unwrap();
        out.covariates.min_eigenvalue()
    };
    let (small, large) = (achieved(4), achieved(8));
    assert!(large >= 1.7 * small, "λ_min {small} at 16 episodes, {large} at 32");
}

#[test]
fn weighted_design_improves_on_its_warmup_on_the_drone() {
    let mut cfg = ScenarioConfig::drone();
    cfg.exploration.thompson.mpc.n_candidates = 64;
    let report = oed_demo(cfg, 8, None, 3).unwrap();
    assert_eq!(report.per_iteration, 81);
    let obj = &report.objective;
    assert_eq!(obj.len(), 9);
    assert!(obj[8] < obj[2] && obj[2] < obj[0], "{obj:?}");
    for w in obj[2..].windows(2) {
        assert!(w[1] <= w[0] * 1.01, "objective rose by more than 1% after iteration 2: {obj:?}");
    }
}

#[test]
fn learned_bump_policies_reach_the_goal_more_than_min_eig_alone() {
    let bump = Scenario::builtin("bump1d").unwrap();
    let m = bump.reduced_hessian_at(bump.truth.a(), 0).unwrap();
    let thompson = light_thompson(128, &bump);
    let budget = 200;

    let mut live = warmed(&bump, 2 * budget + 400, 41);
    let prior = &live.stats().lambda / budget as f64;
    let lam_hat = linalg::min_eigenvalue(&live.stats().lambda).max(0.0) / 10.0;
    let mineig_cfg = MinEigConfig::practical(0.05 * lam_hat, budget);
    let mut cache = Vec::new();
    let out = {
        let mut oracle = ThompsonMpcOracle::new(&mut live, thompson.clone(), rng_seeded(7)).unwrap();
        learn_exp_policies(&m, &prior, &mut cache, &mineig_cfg, budget, &mut oracle, &LearnExpConfig::default()).unwrap()
    };
    assert!(!cache.is_empty() && out.policies.len() > cache.len());

    let visits = |policies: &[ExplorationPolicy<f64>], seed: u64| {
        let mut fresh = LiveSystem::new(bump.truth.clone(), 200, seed);
        for (i, p) in policies.iter().cycle().take(200).enumerate() {
            let _ = fresh.play(p.runner(1000 + i as u64).as_mut());
        }
        near_goal_steps(fresh.log())
    };
    let all = visits(&out.policies, 51);
    let mineig_only = visits(&cache, 51);
    assert!(all >= 2 * mineig_only.max(1), "Π_out {all} visits, MinEig {mineig_only}");
}
