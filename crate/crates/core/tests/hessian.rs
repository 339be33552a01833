use taskexp::hessian::{hessian_gauss_newton, task_gradient, HessianMethod};
use taskexp::linalg;
use taskexp::scenarios::Scenario;

#[test]
fn bump_gauss_newton_diagonal_is_led_by_the_first_bump() {
    let bump = Scenario::builtin("bump1d").unwrap();
    let h = bump.hessian_with(HessianMethod::GaussNewton, bump.truth.a(), 3).unwrap();
    let diag = h.matrix.diagonal();
    let lead = diag[2];
    for k in 3..12 {
        assert!(lead >= 10.0 * diag[k], "a3 {lead} vs a{} {}", k + 1, diag[k]);
    }
    assert!(lead > 0.0);
}

#[test]
fn stored_hessians_are_symmetric_and_psd() {
    for name in ["bump1d", "drone"] {
        let s = Scenario::builtin(name).unwrap();
        for method in [HessianMethod::FiniteDifference, HessianMethod::GaussNewton] {
            let h = s.hessian_with(method, s.truth.a(), 1).unwrap();
            assert_eq!(h.matrix, h.matrix.transpose(), "{name} {method:?}");
            let min = linalg::min_eigenvalue(&h.matrix);
            let scale = linalg::max_eigenvalue(&h.matrix).max(f64::MIN_POSITIVE);
            assert!(min >= -1e-12 * scale, "{name} {method:?}: min eigenvalue {min}");
        }
    }
}

#[test]
fn lqr_task_gradient_vanishes_at_any_model() {
    // π_*(A) is optimal for A, so ∇_{A'} J(π_*(A'); A) is zero at A' = A and
    // the outer-product surrogate carries no information on the drone.
    let drone = Scenario::builtin("drone").unwrap();
    let fd = drone.hessian_with(HessianMethod::FiniteDifference, drone.truth.a(), 0).unwrap();
    let loss = drone.task_loss(drone.truth.a(), 0).unwrap();
    let gn = hessian_gauss_newton(loss.as_ref(), drone.truth.a(), fd.fd_step).unwrap();
    let ratio = gn.matrix.norm() / fd.matrix.norm();
    assert!(ratio < 1e-3, "‖GGᵀ‖/‖H‖ = {ratio}");
    // what remains is central-difference truncation, which falls with the step
    let g = |h: f64| {
        let g = task_gradient(loss.as_ref(), drone.truth.a(), h).unwrap();
        g.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let (coarse, fine) = (g(fd.fd_step), g(fd.fd_step / 2.0));
    assert!(fine <= coarse / 3.0, "‖G‖ {coarse} at h, {fine} at h/2");
}
