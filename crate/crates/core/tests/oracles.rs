//! Finite-difference, Taylor and structural oracles for the plant and controller.

use approx::assert_relative_eq;
use proptest::prelude::*;

use antago_core::controller::{
    closed_loop_field, control_flows, desired_energy, desired_energy_gradient, lyapunov_rate, ControllerGains, Setpoint,
};
use antago_core::observer::{observer_rate, ObserverState};
use antago_core::plant::{
    energy_density, hamiltonian, hamiltonian_gradient, open_loop_field, ActuatorGeometry, FluidParams, PlantParams,
    PlantState,
};
use antago_core::stability::validate_gains;

fn params() -> PlantParams {
    PlantParams::prototype()
}

/// Position strictly inside the range, `frac` in (0, 1).
fn position(frac: f64) -> f64 {
    let (lo, hi) = params().geometry.position_range();
    lo + (hi - lo) * frac
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn gains() -> impl Strategy<Value = ControllerGains> {
    (0.5..5.0f64, 0.5..5.0f64, 1.0..50.0f64, 1.0..15.0f64)
        .prop_map(|(k_p, k_m, k_i, alpha)| ControllerGains::new(k_p, k_m, k_i, alpha).unwrap())
}

fn state() -> impl Strategy<Value = PlantState> {
    (0.05..0.95f64, -1e-3..1e-3f64, -5e4..2e5f64, -5e4..2e5f64)
        .prop_map(|(f, p, p1, p2)| PlantState::new(position(f), p, p1, p2))
}

proptest! {
    #[test]
    fn antagonistic_areas_have_opposite_signs(frac in 0.001..0.999f64) {
        let (a1, a2) = params().geometry.volume_gradients(position(frac)).unwrap();
        prop_assert!(a1 < 0.0 && a2 > 0.0, "A1 {a1}, A2 {a2}");
    }

    #[test]
    fn stored_energy_is_non_negative(s in state()) {
        prop_assert!(hamiltonian(&s, &params()).unwrap() >= 0.0);
        prop_assert!(energy_density(s.p1, &params().fluid) >= 0.0);
    }

    #[test]
    fn volume_taylor_remainder_is_third_order(frac in 0.05..0.95f64) {
        // With exact contraction arithmetic the remainder after the quadratic
        // term shrinks eightfold per halving of the step.
        let geo = ActuatorGeometry::prototype();
        let x = position(frac);
        let k = geo.kinematics(x).unwrap();
        let remainder = |h: f64| {
            let (v1, v2) = geo.volumes(x + h).unwrap();
            let r1 = v1 - k.v1 - h * k.a1 - 0.5 * h * h * k.da1;
            let r2 = v2 - k.v2 - h * k.a2 - 0.5 * h * h * k.da2;
            (r1, r2)
        };
        let h = 1e-5;
        let (a1, a2) = remainder(h);
        let (b1, b2) = remainder(h / 2.0);
        prop_assert!((a1 / b1 - 8.0).abs() < 0.2, "ratio {}", a1 / b1);
        prop_assert!((a2 / b2 - 8.0).abs() < 0.2, "ratio {}", a2 / b2);
    }

    #[test]
    fn hamiltonian_gradient_matches_differences(s in state()) {
        let p = params();
        let g = hamiltonian_gradient(&s, &p).unwrap();
        let h = |st: PlantState| hamiltonian(&st, &p).unwrap();
        let d = |f: &dyn Fn(f64) -> f64, at: f64, step: f64| {
            (8.0 * (f(at + step) - f(at - step)) - (f(at + 2.0 * step) - f(at - 2.0 * step))) / (12.0 * step)
        };
        let fd = [
            d(&|x| h(PlantState { x, ..s }), s.x, 1e-7),
            d(&|v| h(PlantState { p: v, ..s }), s.p, 1.0),
            d(&|v| h(PlantState { p1: v, ..s }), s.p1, 1e3),
            d(&|v| h(PlantState { p2: v, ..s }), s.p2, 1e3),
        ];
        for (a, b) in [g.dx, g.dp, g.dp1, g.dp2].into_iter().zip(fd) {
            prop_assert!(rel_err(a, b) < 1e-6 || (a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn lossless_plant_conserves_energy(s in state()) {
        // (J − R)∇H with R = 0 and no input: dH/dt = ∇H · f vanishes.
        let mut p = params();
        p.damping = 0.0;
        let g = hamiltonian_gradient(&s, &p).unwrap();
        let f = open_loop_field(&s, 0.0, 0.0, 0.0, &p).unwrap();
        let terms = [g.dx * f.x, g.dp * f.p, g.dp1 * f.p1, g.dp2 * f.p2];
        let scale = terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
        let rate: f64 = terms.iter().sum();
        prop_assert!(rate.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE), "rate {rate}, scale {scale}");
    }

    #[test]
    fn damping_dissipates_at_rate_r_v_squared(s in state()) {
        let p = params();
        let g = hamiltonian_gradient(&s, &p).unwrap();
        let f = open_loop_field(&s, 0.0, 0.0, 0.0, &p).unwrap();
        let rate = g.dx * f.x + g.dp * f.p + g.dp1 * f.p1 + g.dp2 * f.p2;
        let expected = -p.damping * g.dp * g.dp;
        prop_assert!((rate - expected).abs() <= 1e-9 * (g.dx * f.x).abs().max(expected.abs()) + 1e-300);
    }

    #[test]
    fn matching_holds_at_random_points(s in state(), g in gains(), f_hat in -2.0..2.0f64, force in -2.0..2.0f64, target in 0.05..0.95f64) {
        let p = params();
        let setpoint = Setpoint::new(position(target), &p.geometry).unwrap();
        let obs = ObserverState::new(f_hat, g.alpha).unwrap();
        let (u1, u2) = control_flows(&s, &obs, &g, &setpoint, &p).unwrap();
        let open = open_loop_field(&s, u1, u2, force, &p).unwrap();
        let closed = closed_loop_field(&s, &obs, force, &g, &setpoint, &p).unwrap();
        for (a, b) in open.to_array().into_iter().zip(closed.to_array()) {
            prop_assert!(rel_err(a, b) < 1e-9, "{a} vs {b}");
        }
        // Observer error obeys ζ̇ = −α ζ under a constant force.
        let e = desired_energy(&s, &obs, force, &g, &setpoint, &p).unwrap();
        let zeta_rate = observer_rate(&s, &obs, &p).unwrap() - g.alpha * open.p;
        prop_assert!(rel_err(zeta_rate, -g.alpha * e.zeta) < 1e-9);
    }

    #[test]
    fn lyapunov_rate_is_the_quadratic_form(s in state(), g in gains(), f_hat in -2.0..2.0f64, force in -2.0..2.0f64) {
        let p = params();
        let setpoint = Setpoint::new(1e-3, &p.geometry).unwrap();
        let obs = ObserverState::new(f_hat, g.alpha).unwrap();
        let rate = lyapunov_rate(&s, &obs, force, &g, &setpoint, &p).unwrap();
        let e = desired_energy(&s, &obs, force, &g, &setpoint, &p).unwrap();
        let theta = validate_gains(&p, &g, p.total_mass(s.x).unwrap(), 0.0).theta;
        let v = [s.p, -e.zeta, e.sigma];
        let form: f64 = (0..3).flat_map(|i| (0..3).map(move |j| v[i] * theta[i][j] * v[j])).sum();
        prop_assert!(rel_err(rate, -form) < 1e-10, "{rate} vs {}", -form);
    }

    #[test]
    fn desired_energy_gradient_matches_differences(s in state(), g in gains(), f_hat in -2.0..2.0f64) {
        let p = params();
        let setpoint = Setpoint::new(-1e-3, &p.geometry).unwrap();
        let obs = ObserverState::new(f_hat, g.alpha).unwrap();
        let grad = desired_energy_gradient(&s, &obs, &g, &setpoint, &p).unwrap();
        let hd = |st: PlantState| desired_energy(&st, &obs, 0.0, &g, &setpoint, &p).unwrap().h_d;
        // Fourth-order stencil: H_d has large curvature in x at high pressure.
        let d = |f: &dyn Fn(f64) -> f64, at: f64, step: f64| {
            (8.0 * (f(at + step) - f(at - step)) - (f(at + 2.0 * step) - f(at - 2.0 * step))) / (12.0 * step)
        };
        let fd = [
            d(&|x| hd(PlantState { x, ..s }), s.x, 1e-7),
            d(&|v| hd(PlantState { p: v, ..s }), s.p, 1.0),
            d(&|v| hd(PlantState { p1: v, ..s }), s.p1, 1e3),
            d(&|v| hd(PlantState { p2: v, ..s }), s.p2, 1e3),
        ];
        for (a, b) in [grad.dx, grad.dp, grad.dp1, grad.dp2].into_iter().zip(fd) {
            prop_assert!(rel_err(a, b) < 1e-6 || (a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }
}

#[test]
fn curvature_matches_differences_near_both_ends() {
    let geo = ActuatorGeometry::prototype();
    for frac in [0.001, 0.01, 0.5, 0.99, 0.999] {
        let x = position(frac);
        let k = geo.kinematics(x).unwrap();
        let h = 1e-9 * geo.length;
        let (a_plus, b_plus) = geo.volume_gradients(x + h).unwrap();
        let (a_minus, b_minus) = geo.volume_gradients(x - h).unwrap();
        assert_relative_eq!(k.da1, (a_plus - a_minus) / (2.0 * h), max_relative = 1e-5);
        assert_relative_eq!(k.da2, (b_plus - b_minus) / (2.0 * h), max_relative = 1e-5);
    }
}

#[test]
fn energy_density_is_zero_and_flat_at_atmosphere() {
    let fluid = FluidParams::water();
    assert_eq!(energy_density(0.0, &fluid), 0.0);
    let h = 1.0;
    let slope = (energy_density(h, &fluid) - energy_density(-h, &fluid)) / (2.0 * h);
    assert!(slope.abs() < 1e-8);
    // φ ≈ P²/(2Γ0) for small P.
    assert_relative_eq!(energy_density(1e3, &fluid), 1e6 / (2.0 * fluid.bulk_modulus), max_relative = 1e-5);
}

#[test]
fn domain_edges_are_rejected() {
    let geo = ActuatorGeometry::prototype();
    let (lo, hi) = geo.position_range();
    assert!(geo.volumes(lo).is_err());
    assert!(geo.volumes(hi).is_err());
    assert!(geo.volumes(0.5 * (lo + hi)).is_ok());
}
