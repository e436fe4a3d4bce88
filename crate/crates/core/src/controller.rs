//! Energy-shaping flow-rate controller.
//!
//! The controller assigns the closed-loop storage function
//!
//! ```text
//! H_d = p²/(2 k_m M) + k_p (x* − x)²/2 + ς²/2
//! ς   = P1 A1 + P2 A2 − F̂ + k_p k_m (x − x*)
//! ```
//!
//! and computes the pump flows that make the open-loop field coincide with
//! the port-Hamiltonian closed loop built from the interconnection terms in
//! [`Interconnection`]. [`closed_loop_field`] evaluates that target directly
//! so the two routes can be compared.
//!
//! Two conventions differ from a literal transcription of the textbook form
//! and are what make the two routes agree exactly:
//!
//! * the pressure rows use `∂p H_d = p/(k_m M)`, so the velocity term of the
//!   flows carries a `1/k_m` factor;
//! * with `ζ = F̂ − α p − F`, the estimation error enters the momentum row
//!   with a positive sign.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observer::ObserverState;
use crate::plant::{ActuatorGeometry, Kinematics, PlantParams, PlantRate, PlantState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    /// Potential stiffness [N/m].
    pub k_p: f64,
    /// Mass scaling, `M_d = k_m M`.
    pub k_m: f64,
    /// Pressure injection gain.
    pub k_i: f64,
    /// Observer gain [1/s].
    pub alpha: f64,
}

impl ControllerGains {
    pub fn new(k_p: f64, k_m: f64, k_i: f64, alpha: f64) -> Result<Self> {
        let g = ControllerGains { k_p, k_m, k_i, alpha };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k_p", self.k_p), ("k_m", self.k_m), ("k_i", self.k_i), ("alpha", self.alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Target payload position, strictly inside the admissible range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Setpoint {
    x_star: f64,
}

impl Setpoint {
    pub fn new(x_star: f64, geometry: &ActuatorGeometry) -> Result<Self> {
        if !geometry.contains(x_star) {
            let (lo, hi) = geometry.position_range();
            return Err(Error::invalid(
                "x_star",
                format!("{x_star:e} m is outside the admissible range ({lo:e}, {hi:e}) m"),
            ));
        }
        Ok(Setpoint { x_star })
    }

    pub fn x_star(&self) -> f64 {
        self.x_star
    }
}

/// `ς` and its partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaTerms {
    pub value: f64,
    pub d_x: f64,
    pub d_p1: f64,
    pub d_p2: f64,
}

pub fn sigma(
    state: &PlantState,
    f_hat: f64,
    gains: &ControllerGains,
    setpoint: &Setpoint,
    geometry: &ActuatorGeometry,
) -> Result<SigmaTerms> {
    let k = geometry.kinematics(state.x)?;
    Ok(sigma_from(state, f_hat, gains, setpoint.x_star, &k))
}

fn sigma_from(state: &PlantState, f_hat: f64, gains: &ControllerGains, x_star: f64, k: &Kinematics) -> SigmaTerms {
    let kpm = gains.k_p * gains.k_m;
    SigmaTerms {
        value: state.p1 * k.a1 + state.p2 * k.a2 - f_hat + kpm * (state.x - x_star),
        d_x: state.p1 * k.da1 + state.p2 * k.da2 + kpm,
        d_p1: k.a1,
        d_p2: k.a2,
    }
}

/// Non-zero entries of the closed-loop interconnection and damping matrix.
/// `S13 = S14 = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interconnection {
    pub s12: f64,
    pub s22: f64,
    pub s23: f64,
    pub s24: f64,
    pub s33: f64,
    pub s44: f64,
}

// Quantities shared by every closed-loop evaluation at one state.
struct LoopPoint {
    k: Kinematics,
    mass: f64,
    sigma: SigmaTerms,
    s: Interconnection,
}

fn loop_point(
    state: &PlantState,
    obs: &ObserverState,
    gains: &ControllerGains,
    x_star: f64,
    params: &PlantParams,
) -> Result<LoopPoint> {
    let k = params.geometry.kinematics(state.x)?;
    let mass = params.mass_from_volumes(k.v1, k.v2);
    let sigma = sigma_from(state, obs.f_hat, gains, x_star, &k);
    let km = gains.k_m;
    let lift = 1.0 + km * sigma.d_x;
    let s = Interconnection {
        s12: km,
        s22: km * params.damping - obs.alpha * km * mass,
        s23: lift / (2.0 * sigma.d_p1),
        s24: lift / (2.0 * sigma.d_p2),
        s33: gains.k_i / (sigma.d_p1 * sigma.d_p1),
        s44: gains.k_i / (sigma.d_p2 * sigma.d_p2),
    };
    Ok(LoopPoint { k, mass, sigma, s })
}

pub fn interconnection(
    state: &PlantState,
    obs: &ObserverState,
    gains: &ControllerGains,
    setpoint: &Setpoint,
    params: &PlantParams,
) -> Result<Interconnection> {
    Ok(loop_point(state, obs, gains, setpoint.x_star, params)?.s)
}

/// Pump flows `(U1, U2)` [m³/s]. `ς` uses the integrator state `F̂`.
pub fn control_flows(
    state: &PlantState,
    obs: &ObserverState,
    gains: &ControllerGains,
    setpoint: &Setpoint,
    params: &PlantParams,
) -> Result<(f64, f64)> {
    let lp = loop_point(state, obs, gains, setpoint.x_star, params)?;
    let k = &lp.k;
    assert!(k.a1 != 0.0 && k.a2 != 0.0, "volume gradients vanish inside the domain");
    let xdot = state.p / lp.mass;
    let (r1, r2) = pressure_rates_from(&lp, gains, xdot);
    let g = params.fluid.bulk_modulus;
    Ok((k.a1 * xdot + k.v1 / g * r1, k.a2 * xdot + k.v2 / g * r2))
}

/// Closed-loop pressure rates with the bulk modulus cancelled analytically:
/// `Ṗi = −((1 + k_m ∂x ς)/(2 k_m) ẋ + k_i ς)/Ai`.
pub fn pressure_rates(
    state: &PlantState,
    obs: &ObserverState,
    gains: &ControllerGains,
    setpoint: &Setpoint,
    params: &PlantParams,
) -> Result<(f64, f64)> {
    let lp = loop_point(state, obs, gains, setpoint.x_star, params)?;
    Ok(pressure_rates_from(&lp, gains, state.p / lp.mass))
}

fn pressure_rates_from(lp: &LoopPoint, gains: &ControllerGains, xdot: f64) -> (f64, f64) {
    let drive = (1.0 + gains.k_m * lp.sigma.d_x) / (2.0 * gains.k_m) * xdot + gains.k_i * lp.sigma.value;
    (-drive / lp.k.a1, -drive / lp.k.a2)
}

/// Gradient of `H_d` with respect to `(x, p, P1, P2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesiredGradient {
    pub dx: f64,
    pub dp: f64,
    pub dp1: f64,
    pub dp2: f64,
}

fn desired_gradient(state: &PlantState, lp: &LoopPoint, gains: &ControllerGains, x_star: f64, params: &PlantParams) -> DesiredGradient {
    let km = gains.k_m;
    let mass_slope = params.fluid.density * (lp.k.a1 + lp.k.a2);
    let p = state.p;
    DesiredGradient {
        dx: -p * p * mass_slope / (2.0 * km * lp.mass * lp.mass)
            + gains.k_p * (state.x - x_star)
            + lp.sigma.value * lp.sigma.d_x,
        dp: p / (km * lp.mass),
        dp1: lp.sigma.value * lp.sigma.d_p1,
        dp2: lp.sigma.value * lp.sigma.d_p2,
    }
}

pub fn desired_energy_gradient(
    state: &PlantState,
    obs: &ObserverState,
    gains: &ControllerGains,
    setpoint: &Setpoint,
    params: &PlantParams,
) -> Result<DesiredGradient> {
    let lp = loop_point(state, obs, gains, setpoint.x_star, params)?;
    Ok(desired_gradient(state, &lp, gains, setpoint.x_star, params))
}

/// Target closed-loop field, with `ζ = F̂ − α p − true_force`.
pub fn closed_loop_field(
    state: &PlantState,
    obs: &ObserverState,
    true_force: f64,
    gains: &ControllerGains,
    setpoint: &Setpoint,
    params: &PlantParams,
) -> Result<PlantRate> {
    let lp = loop_point(state, obs, gains, setpoint.x_star, params)?;
    let d = desired_gradient(state, &lp, gains, setpoint.x_star, params);
    let s = &lp.s;
    let zeta = obs.f_hat - obs.alpha * state.p - true_force;
    Ok(PlantRate {
        x: s.s12 * d.dp,
        p: -s.s12 * d.dx - s.s22 * d.dp + s.s23 * d.dp1 + s.s24 * d.dp2 + zeta,
        p1: -s.s23 * d.dp - s.s33 * d.dp1,
        p2: -s.s24 * d.dp - s.s44 * d.dp2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesiredEnergy {
    /// `H_d` [J].
    pub h_d: f64,
    /// `Ψ = H_d + ζ²/2` [J].
    pub psi: f64,
    /// Estimation error `ζ` [N].
    pub zeta: f64,
    /// `ς` [N].
    pub sigma: f64,
}

pub fn desired_energy(
    state: &PlantState,
    obs: &ObserverState,
    true_force: f64,
    gains: &ControllerGains,
    setpoint: &Setpoint,
    params: &PlantParams,
) -> Result<DesiredEnergy> {
    let k = params.geometry.kinematics(state.x)?;
    let mass = params.mass_from_volumes(k.v1, k.v2);
    let sig = sigma_from(state, obs.f_hat, gains, setpoint.x_star, &k);
    let dx = setpoint.x_star - state.x;
    let h_d = state.p * state.p / (2.0 * gains.k_m * mass) + 0.5 * gains.k_p * dx * dx + 0.5 * sig.value * sig.value;
    let zeta = obs.f_hat - obs.alpha * state.p - true_force;
    Ok(DesiredEnergy {
        h_d,
        psi: h_d + 0.5 * zeta * zeta,
        zeta,
        sigma: sig.value,
    })
}

/// Analytic `Ψ̇ = −S22 (∂p H_d)² + ∂p H_d ζ − α ζ² − 2 k_i ς²` for a constant
/// external force.
pub fn lyapunov_rate(
    state: &PlantState,
    obs: &ObserverState,
    true_force: f64,
    gains: &ControllerGains,
    setpoint: &Setpoint,
    params: &PlantParams,
) -> Result<f64> {
    let lp = loop_point(state, obs, gains, setpoint.x_star, params)?;
    let dp = state.p / (gains.k_m * lp.mass);
    let zeta = obs.f_hat - obs.alpha * state.p - true_force;
    let sig = lp.sigma.value;
    Ok(-lp.s.s22 * dp * dp + dp * zeta - obs.alpha * zeta * zeta - 2.0 * gains.k_i * sig * sig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::open_loop_field;
    use approx::assert_relative_eq;

    fn setup() -> (PlantParams, ControllerGains, Setpoint) {
        let params = PlantParams::prototype();
        let gains = ControllerGains::new(1.0, 2.0, 10.0, 10.0).unwrap();
        let sp = Setpoint::new(1e-3, &params.geometry).unwrap();
        (params, gains, sp)
    }

    #[test]
    fn sigma_vanishes_at_rest_on_target() {
        let (params, gains, sp) = setup();
        let s = PlantState::new(1e-3, 0.0, 0.0, 0.0);
        assert_eq!(sigma(&s, 0.0, &gains, &sp, &params.geometry).unwrap().value, 0.0);
    }

    #[test]
    fn sigma_partials_match_finite_differences() {
        let (params, gains, sp) = setup();
        let s = PlantState::new(-4e-4, 1e-4, 2e3, -7e2);
        let t = sigma(&s, 0.02, &gains, &sp, &params.geometry).unwrap();
        let f = |x: f64| sigma(&PlantState { x, ..s }, 0.02, &gains, &sp, &params.geometry).unwrap().value;
        let h = 1e-8;
        assert_relative_eq!(t.d_x, (f(s.x + h) - f(s.x - h)) / (2.0 * h), max_relative = 1e-6);
        let g = |p1: f64| sigma(&PlantState { p1, ..s }, 0.02, &gains, &sp, &params.geometry).unwrap().value;
        assert_relative_eq!(t.d_p1, (g(s.p1 + 1.0) - g(s.p1 - 1.0)) / 2.0, max_relative = 1e-6);
    }

    #[test]
    fn flows_vanish_at_equilibrium() {
        let (params, gains, sp) = setup();
        let obs = ObserverState::new(0.0, gains.alpha).unwrap();
        let s = PlantState::new(1e-3, 0.0, 0.0, 0.0);
        assert_eq!(control_flows(&s, &obs, &gains, &sp, &params).unwrap(), (0.0, 0.0));
        let r = closed_loop_field(&s, &obs, 0.0, &gains, &sp, &params).unwrap();
        assert_eq!(r.to_array(), [0.0; 4]);
    }

    #[test]
    fn open_loop_with_flows_matches_closed_loop() {
        let (params, gains, sp) = setup();
        let obs = ObserverState::new(0.3, gains.alpha).unwrap();
        let s = PlantState::new(6e-4, 2e-4, 1.5e3, 3e2);
        let (u1, u2) = control_flows(&s, &obs, &gains, &sp, &params).unwrap();
        let open = open_loop_field(&s, u1, u2, 0.25, &params).unwrap().to_array();
        let closed = closed_loop_field(&s, &obs, 0.25, &gains, &sp, &params).unwrap().to_array();
        for (a, b) in open.iter().zip(&closed) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn substituted_pressure_rates_match_raw_composition() {
        let (params, gains, sp) = setup();
        let obs = ObserverState::new(-0.1, gains.alpha).unwrap();
        let s = PlantState::new(-2e-3, -3e-4, -4e2, 9e2);
        let (u1, u2) = control_flows(&s, &obs, &gains, &sp, &params).unwrap();
        let raw = open_loop_field(&s, u1, u2, 0.0, &params).unwrap();
        let (r1, r2) = pressure_rates(&s, &obs, &gains, &sp, &params).unwrap();
        assert_relative_eq!(raw.p1, r1, max_relative = 1e-9);
        assert_relative_eq!(raw.p2, r2, max_relative = 1e-9);
    }

    #[test]
    fn desired_energy_is_zero_only_at_equilibrium() {
        let (params, gains, sp) = setup();
        let obs = ObserverState::new(0.0, gains.alpha).unwrap();
        let eq = PlantState::new(1e-3, 0.0, 0.0, 0.0);
        let e = desired_energy(&eq, &obs, 0.0, &gains, &sp, &params).unwrap();
        assert_eq!((e.h_d, e.psi), (0.0, 0.0));
        let moving = PlantState { p: 1e-3, ..eq };
        let fast = PlantState { p: 1.0, ..eq };
        let e1 = desired_energy(&moving, &obs, 0.0, &gains, &sp, &params).unwrap().h_d;
        let e2 = desired_energy(&fast, &obs, 0.0, &gains, &sp, &params).unwrap().h_d;
        assert!(e1 > 0.0 && e2 > 1e5 * e1);
    }

    #[test]
    fn interconnection_damping_term() {
        let (params, gains, sp) = setup();
        let obs = ObserverState::new(0.0, gains.alpha).unwrap();
        let s = PlantState::new(0.0, 0.0, 0.0, 0.0);
        let ic = interconnection(&s, &obs, &gains, &sp, &params).unwrap();
        let m = params.total_mass(0.0).unwrap();
        assert_relative_eq!(ic.s22, 2.0 * (5.0 - 10.0 * m), max_relative = 1e-14);
        assert_eq!(ic.s12, 2.0);
    }

    #[test]
    fn setpoint_must_lie_in_domain() {
        let g = ActuatorGeometry::prototype();
        assert!(Setpoint::new(0.01, &g).is_err());
        assert!(Setpoint::new(-g.x0, &g).is_err());
        assert!(Setpoint::new(1e-3, &g).is_ok());
    }
}
