use nalgebra::DMatrix;
use taskexp::control::{
    closed_form_cost, evaluate_cost_mc, paired_cost_difference, synthesize_lqr_affine, ControlPolicy,
};
use taskexp::dynamics::standard_normals;
use taskexp::scenarios::Scenario;
use taskexp::seed::rng_seeded;

fn nudge(policy: &ControlPolicy<f64>, h: usize, idx: usize, delta: f64) -> ControlPolicy<f64> {
    let ControlPolicy::LinearAffine { gains, offsets } = policy else { unreachable!() };
    let (mut gains, mut offsets) = (gains.clone(), offsets.clone());
    let k = gains[h].len();
    if idx < k {
        gains[h][idx] += delta;
    } else {
        offsets[h][idx - k] += delta;
    }
    ControlPolicy::LinearAffine { gains, offsets }
}

#[test]
fn drone_lqr_is_locally_minimal_in_every_probed_coordinate() {
    let drone = Scenario::builtin("drone").unwrap();
    let syn = synthesize_lqr_affine(&drone.truth, &drone.cost).unwrap();
    let best = closed_form_cost(&drone.truth, &drone.cost, &syn.policy).unwrap();
    assert!((best - syn.estimated_cost).abs() <= 1e-9 * best.abs());
    for h in [0, 1, 17, 33, 48, 49] {
        for idx in 0..21 {
            for delta in [1e-3, -1e-3, 1e-1, -1e-1] {
                let j = closed_form_cost(&drone.truth, &drone.cost, &nudge(&syn.policy, h, idx, delta)).unwrap();
                assert!(j >= best - 1e-9 * best.abs(), "h={h} idx={idx} delta={delta}: {j} < {best}");
            }
        }
    }
}

#[test]
fn noiseless_drone_closed_form_matches_simulation() {
    let drone = Scenario::builtin("drone").unwrap();
    let model = drone.truth.with_noise_std(0.0);
    let syn = synthesize_lqr_affine(&model, &drone.cost).unwrap();
    let mut rng = rng_seeded(1);
    let mut perturbed = syn.policy.clone();
    for (i, delta) in [(0, 0.3), (5, -0.2), (14, 0.1)] {
        perturbed = nudge(&perturbed, i, i, delta);
    }
    for policy in [&syn.policy, &perturbed] {
        let exact = closed_form_cost(&model, &drone.cost, policy).unwrap();
        let mc = evaluate_cost_mc(&model, &drone.cost, policy, 1, &mut rng).unwrap().mean;
        assert!((exact - mc).abs() <= 1e-10 * exact.abs().max(1.0), "{exact} vs {mc}");
    }
}

#[test]
fn monte_carlo_error_shrinks_with_the_square_root_of_rollouts() {
    let bump = Scenario::builtin("bump1d").unwrap();
    let policy = bump.synthesize(bump.truth.a(), 0).unwrap().policy;
    let repeats = 400;
    let spread = |n: usize| {
        let mut rng = rng_seeded(n as u64);
        let means: Vec<f64> = (0..repeats)
            .map(|_| evaluate_cost_mc(&bump.truth, &bump.cost, &policy, n, &mut rng).unwrap().mean)
            .collect();
        let m = means.iter().sum::<f64>() / repeats as f64;
        (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt()
    };
    let (s1000, s4000) = (spread(1000), spread(4000));
    assert!(s4000 <= 0.55 * s1000, "std {s4000} at n=4000 vs {s1000} at n=1000");
}

/// `J(π_*((1−t)A_* + tÂ₀); A_*) − J(π_*(A_*); A_*)` at each `t`.
fn excess_along_segment(scenario: &Scenario, a0: &DMatrix<f64>, ts: &[f64], rollouts: usize) -> Vec<(f64, f64)> {
    let a_star = scenario.truth.a().clone();
    let reference = scenario.synthesize(&a_star, 9).unwrap().policy;
    ts.iter()
        .map(|&t| {
            let a = &a_star * (1.0 - t) + a0 * t;
            let policy = scenario.synthesize(&a, 9).unwrap().policy;
            let d = paired_cost_difference(&scenario.truth, &scenario.cost, &policy, &reference, rollouts, &mut rng_seeded(4))
                .unwrap();
            (d.mean, d.se)
        })
        .collect()
}

fn perturbed_truth(scenario: &Scenario, scale: f64, seed: u64) -> DMatrix<f64> {
    let a = scenario.truth.a();
    let mut z = vec![0.0; a.len()];
    standard_normals(&mut rng_seeded(seed), &mut z);
    a + DMatrix::from_column_slice(a.nrows(), a.ncols(), &z) * scale
}

#[test]
fn certainty_equivalence_excess_shrinks_toward_the_truth() {
    let ts = [0.0, 0.25, 0.5, 1.0];

    let drone = Scenario::builtin("drone").unwrap();
    let path = excess_along_segment(&drone, &perturbed_truth(&drone, 0.02, 1), &ts, 1);
    assert_eq!(path[0].0, 0.0);
    for w in path.windows(2) {
        assert!(w[0].0 < w[1].0, "drone excess not increasing along the segment: {path:?}");
    }

    let bump = Scenario::builtin("bump1d").unwrap();
    let mut a0 = bump.truth.a().clone();
    a0[(0, 2)] += 0.3;
    a0[(0, 0)] += 0.02;
    let path = excess_along_segment(&bump, &a0, &ts, 4000);
    assert!(path[0].0.abs() < 1e-12);
    for w in path.windows(2) {
        let slack = 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
        assert!(w[0].0 <= w[1].0 + slack, "bump excess not monotone: {path:?}");
    }
    assert!(path[3].0 > 0.0);

    let car = Scenario::builtin("car").unwrap();
    let path = excess_along_segment(&car, &perturbed_truth(&car, 0.05, 2), &ts, 2000);
    assert!(path[0].0.abs() < 1e-12);
    for w in path.windows(2) {
        let slack = 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
        assert!(w[0].0 <= w[1].0 + slack, "car excess not monotone: {path:?}");
    }
}
