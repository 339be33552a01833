use taskexp::harness::reference_quantities;
use taskexp::linalg;
use taskexp::scenarios::{evaluate_checkpoints, run_method, MethodKind, Scenario, TrialSeeds};

#[test]
fn every_method_spends_exactly_its_budget() {
    let bump = Scenario::builtin("bump1d").unwrap();
    for kind in MethodKind::ALL {
        for total in [10, 17, 40] {
            let run = run_method(&bump, kind, total, &TrialSeeds::new(3, 0)).unwrap();
            assert_eq!(run.live.used(), total, "{kind} at {total}");
            assert_eq!(run.live.log().len(), total);
            assert_eq!(run.warmup, 10);
        }
    }
    let drone = Scenario::builtin("drone").unwrap();
    for kind in MethodKind::ALL {
        let run = run_method(&drone, kind, 26, &TrialSeeds::new(3, 1)).unwrap();
        assert_eq!(run.live.used(), 26, "{kind}");
    }
}

#[test]
fn a_trial_is_reproducible_from_its_seeds() {
    let bump = Scenario::builtin("bump1d").unwrap();
    for kind in [MethodKind::Task, MethodKind::Uniform] {
        let a = run_method(&bump, kind, 30, &TrialSeeds::new(11, 2)).unwrap();
        let b = run_method(&bump, kind, 30, &TrialSeeds::new(11, 2)).unwrap();
        assert_eq!(a.live.log(), b.live.log(), "{kind}");
        assert_eq!(a.epochs, b.epochs);
        let c = run_method(&bump, kind, 30, &TrialSeeds::new(11, 3)).unwrap();
        assert_ne!(a.live.log(), c.live.log());
    }
}

#[test]
fn random_exploration_matches_the_power_budget() {
    for (name, d_u) in [("bump1d", 1.0), ("drone", 3.0), ("car", 2.0)] {
        let s = Scenario::builtin(name).unwrap();
        let h = s.truth.horizon() as f64;
        assert_eq!(s.power_budget(), 10.0 * h);
        assert!((s.random_sigma().powi(2) - 10.0 / d_u).abs() < 1e-12, "{name}");
    }
    let drone = Scenario::builtin("drone").unwrap();
    let run = run_method(&drone, MethodKind::Random, 400, &TrialSeeds::new(5, 0)).unwrap();
    let energy: Vec<f64> =
        run.live.log().iter().map(|t| t.inputs.iter().map(|u| u.norm_squared()).sum::<f64>()).collect();
    let n = energy.len() as f64;
    let mean = energy.iter().sum::<f64>() / n;
    let se = (energy.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((mean - drone.power_budget()).abs() <= 4.0 * se, "E[Σ‖u‖²] = {mean} ± {se}");
}

#[test]
fn uniform_exploration_raises_the_smallest_eigenvalue_over_random_on_the_drone() {
    let drone = Scenario::builtin("drone").unwrap();
    let mut ratios = Vec::new();
    for trial in 0..3 {
        let seeds = TrialSeeds::new(8, trial);
        let lam = |kind| {
            let run = run_method(&drone, kind, 40, &seeds).unwrap();
            linalg::min_eigenvalue(&run.live.stats().lambda)
        };
        ratios.push(lam(MethodKind::Uniform) / lam(MethodKind::Random));
    }
    assert!(ratios.iter().all(|&r| r >= 1.2), "λ_min ratios {ratios:?}");
}

#[test]
fn cost_minimization_stays_above_task_driven_on_the_drone() {
    let drone = Scenario::builtin("drone").unwrap();
    let (optimum, m_star) = reference_quantities(&drone, 0).unwrap();
    let checkpoints = [10, 16, 32, 64, 100];
    let (mut task, mut costmin) = (0.0, 0.0);
    for trial in 0..4 {
        let seeds = TrialSeeds::new(0, trial);
        for (kind, total) in [(MethodKind::Task, &mut task), (MethodKind::CostMin, &mut costmin)] {
            let run = run_method(&drone, kind, 100, &seeds).unwrap();
            let recs = evaluate_checkpoints(&drone, &run, &checkpoints, &m_star, &optimum, &seeds).unwrap();
            for r in &recs {
                let floor = -3.0 * r.excess_loss_se.max(optimum.cost.se);
                assert!(r.excess_loss >= floor, "{kind} trial {trial} at {}: {}", r.episodes, r.excess_loss);
            }
            *total += recs.last().unwrap().excess_loss;
        }
    }
    assert!(costmin > task, "mean excess at 100: costmin {} task {}", costmin / 4.0, task / 4.0);
}
