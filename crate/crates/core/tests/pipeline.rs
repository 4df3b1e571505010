use duffing_core::action_angle::{ActionAngleChart, ScaledSystem};
use duffing_core::corpus;
use duffing_core::dynamics::{fit_twist_form, FlowSpec};
use duffing_core::experiments::{iterate_orbit, rotation_number, AnnulusCoordinate, ORBIT_TOLERANCE};
use duffing_core::normal_form::{choose_parameters, iterate_normal_form};
use duffing_core::smoothing::{approximation_error, smooth};
use duffing_core::Error;

#[test]
fn orbit_rotation_agrees_with_fitted_twist_map() {
    let a = 100.0;
    let spec = corpus::main_n1().unwrap();
    let chart = ActionAngleChart::new(1).unwrap();
    let sys = ScaledSystem::new(spec.clone(), a).unwrap();
    let params = choose_parameters(1, spec.gamma(), 0.1, a).unwrap();
    let nf = iterate_normal_form(&sys, &chart, &params).unwrap();
    let fit = fit_twist_form(&FlowSpec::scaled(sys), &chart, &nf, (2.0, 3.0), (5, 8)).unwrap();
    let alpha_mid = fit.alpha_samples[2];
    assert_eq!(fit.rho[2], 2.5);

    // the same level followed in the original variables
    let coord = AnnulusCoordinate::new(chart, a).unwrap();
    let map = FlowSpec::original(spec).with_tolerance(ORBIT_TOLERANCE);
    let orbit = iterate_orbit(&map, coord.state(2.5 * a, 0.0).unwrap(), 2000, 100).unwrap();
    let (omega, _) = rotation_number(&orbit).unwrap();
    // ρ and I differ by O(1/A), and twist ~ 1.6 per unit action
    assert!((omega - alpha_mid).abs() < 0.01 * alpha_mid, "ω {omega} vs α {alpha_mid}");
}

#[test]
fn smoothing_feeds_a_bounded_remainder() {
    let spec = corpus::main_n1().unwrap();
    let rough = spec.coefficient(2);
    let sigma = 0.01;
    let p = smooth(rough, sigma).unwrap();
    let err = approximation_error(rough, sigma).unwrap();
    assert!(err > 0.0 && err < 1.0);
    assert!(p.degree() <= duffing_core::smoothing::bandwidth(sigma));
}

#[test]
fn hypothesis_gate_rejects_rough_high_degree() {
    let err = choose_parameters(2, 0.4, 0.1, 100.0).unwrap_err();
    assert!(matches!(err, Error::Hypothesis(ref m) if m.contains("1 - 1/n")), "{err}");
}
