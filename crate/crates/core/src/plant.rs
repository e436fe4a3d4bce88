//! Port-Hamiltonian model of two hydraulic bellow actuators pulling on a
//! common payload.
//!
//! The state is `(x, p, P1, P2)`: payload position, momentum and the two
//! gauge pressures. Actuator 2 contracts when `x` grows and actuator 1
//! expands, so `∂V1/∂x < 0 < ∂V2/∂x` everywhere in the admissible range.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Actuator, Error, Result};

/// Default distance kept from the square-root singularity of the volume
/// map, in metres.
pub const DEFAULT_DOMAIN_MARGIN: f64 = 1e-6;

/// Geometry of one bellow actuator (both actuators of the pair are identical).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuatorGeometry {
    /// `L0`, length of the empty actuator [m].
    pub length: f64,
    /// `n_L`, number of pouches.
    pub pouches: u32,
    /// `D_s` [m].
    pub d_s: f64,
    /// `d_c` [m].
    pub d_c: f64,
    /// `k0`, dimensionless scaling factor of the pouch volume.
    pub k0: f64,
    /// `K0 = k0 (L0²/n_L)(d_c/3 + D_s/2)` [m³].
    pub volume_scale: f64,
    /// `V0`, dead volume of fluid in each actuator [m³].
    pub dead_volume: f64,
    /// `x0`, contraction of actuator 2 at `x = 0` [m].
    pub x0: f64,
    /// `x_M`, maximum contraction [m].
    pub x_max: f64,
    /// States closer than this to the square-root boundary are rejected [m].
    pub domain_margin: f64,
}

/// Closed-form volume quantities of both actuators at one position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinematics {
    pub v1: f64,
    pub v2: f64,
    pub a1: f64,
    pub a2: f64,
    pub da1: f64,
    pub da2: f64,
}

impl ActuatorGeometry {
    /// Builds the geometry from the scaling factor `k0`; `K0` is derived.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        length: f64,
        pouches: u32,
        d_s: f64,
        d_c: f64,
        k0: f64,
        dead_volume: f64,
        x0: f64,
        x_max: f64,
    ) -> Result<Self> {
        let shape = shape_factor(length, pouches, d_s, d_c);
        let g = ActuatorGeometry {
            length,
            pouches,
            d_s,
            d_c,
            k0,
            volume_scale: k0 * shape,
            dead_volume,
            x0,
            x_max,
            domain_margin: DEFAULT_DOMAIN_MARGIN,
        };
        g.validate()?;
        Ok(g)
    }

    /// Builds the geometry from the combined volume scale `K0`; `k0` is derived.
    #[allow(clippy::too_many_arguments)]
    pub fn with_volume_scale(
        length: f64,
        pouches: u32,
        d_s: f64,
        d_c: f64,
        volume_scale: f64,
        dead_volume: f64,
        x0: f64,
        x_max: f64,
    ) -> Result<Self> {
        let shape = shape_factor(length, pouches, d_s, d_c);
        let g = ActuatorGeometry {
            length,
            pouches,
            d_s,
            d_c,
            k0: volume_scale / shape,
            volume_scale,
            dead_volume,
            x0,
            x_max,
            domain_margin: DEFAULT_DOMAIN_MARGIN,
        };
        g.validate()?;
        Ok(g)
    }

    /// Prototype actuator: 30 mm long, three pouches, `K0 = 2.8e-6 m³`.
    pub fn prototype() -> Self {
        let length = 30e-3;
        Self::with_volume_scale(length, 3, 12e-3, 9e-3, 2.8e-6, 1e-7, length / 8.0, length / 4.0)
            .expect("prototype geometry is valid")
    }

    /// `(L0²/n_L)(d_c/3 + D_s/2)`, the volume scale without `k0`.
    pub fn shape_factor(&self) -> f64 {
        shape_factor(self.length, self.pouches, self.d_s, self.d_c)
    }

    /// Recomputes `K0` after `k0` or one of the dimensions changed.
    pub fn refresh_volume_scale(&mut self) {
        self.volume_scale = self.k0 * self.shape_factor();
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("L0", self.length),
            ("D_s", self.d_s),
            ("d_c", self.d_c),
            ("k0", self.k0),
            ("K0", self.volume_scale),
            ("V0", self.dead_volume),
            ("x0", self.x0),
            ("x_M", self.x_max),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {value}")));
            }
        }
        if self.pouches == 0 {
            return Err(Error::invalid("n_L", "must be at least 1"));
        }
        if self.x0 >= self.x_max {
            return Err(Error::invalid("x0", "must be smaller than x_M"));
        }
        // The volume gradient vanishes at (x + x0)/L0 = 4/9; x_M <= L0/4 keeps it away.
        if self.x_max > self.length / 4.0 * (1.0 + 1e-12) {
            return Err(Error::invalid("x_M", "must not exceed L0/4"));
        }
        if !(self.domain_margin >= 0.0 && 2.0 * self.domain_margin < self.x_max) {
            return Err(Error::invalid("domain_margin", "must be >= 0 and smaller than x_M/2"));
        }
        let expected = self.k0 * self.shape_factor();
        if ((self.volume_scale - expected) / expected).abs() > 1e-12 {
            return Err(Error::invalid(
                "K0",
                format!(
                    "inconsistent with k0: k0 (L0^2/n_L)(d_c/3 + D_s/2) = {expected:e}, got {:e}",
                    self.volume_scale
                ),
            ));
        }
        Ok(())
    }

    /// Open interval of admissible payload positions, before the margin.
    pub fn position_range(&self) -> (f64, f64) {
        (-self.x0, self.x_max - self.x0)
    }

    /// Midpoint of the admissible position range.
    pub fn midpoint(&self) -> f64 {
        0.5 * self.x_max - self.x0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.check(x).is_ok()
    }

    fn check(&self, x: f64) -> Result<(f64, f64)> {
        let c1 = self.x_max - x - self.x0;
        let c2 = x + self.x0;
        if !(c1 > self.domain_margin) {
            return Err(Error::ActuatorDomain {
                actuator: Actuator::First,
                x,
                contraction: c1,
                margin: self.domain_margin,
            });
        }
        if !(c2 > self.domain_margin) {
            return Err(Error::ActuatorDomain {
                actuator: Actuator::Second,
                x,
                contraction: c2,
                margin: self.domain_margin,
            });
        }
        Ok((c1 / self.length, c2 / self.length))
    }

    /// `L(θ) = L0 sin θ / θ`.
    pub fn pouch_length(&self, theta: f64) -> Result<f64> {
        check_angle(theta)?;
        if theta == 0.0 {
            return Ok(self.length);
        }
        Ok(self.length * theta.sin() / theta)
    }

    /// `V(θ) = K0 (θ − cos θ sin θ)/θ²`, zero for the empty actuator.
    pub fn pouch_volume(&self, theta: f64) -> Result<f64> {
        check_angle(theta)?;
        if theta == 0.0 {
            return Ok(0.0);
        }
        Ok(self.volume_scale * (theta - theta.cos() * theta.sin()) / (theta * theta))
    }

    /// `(V1, V2)` at payload position `x`.
    pub fn volumes(&self, x: f64) -> Result<(f64, f64)> {
        let (w, u) = self.check(x)?;
        Ok((
            self.volume_scale * profile(w) + self.dead_volume,
            self.volume_scale * profile(u) + self.dead_volume,
        ))
    }

    /// `(A1, A2) = (∂V1/∂x, ∂V2/∂x)`.
    pub fn volume_gradients(&self, x: f64) -> Result<(f64, f64)> {
        let (w, u) = self.check(x)?;
        let s = self.volume_scale / self.length;
        Ok((-s * profile_slope(w), s * profile_slope(u)))
    }

    /// `(∂A1/∂x, ∂A2/∂x)`.
    pub fn volume_curvatures(&self, x: f64) -> Result<(f64, f64)> {
        let (w, u) = self.check(x)?;
        let s = self.volume_scale / (self.length * self.length);
        Ok((s * profile_curvature(w), s * profile_curvature(u)))
    }

    /// Volumes and their first two derivatives in a single domain check.
    pub fn kinematics(&self, x: f64) -> Result<Kinematics> {
        let (w, u) = self.check(x)?;
        let k = self.volume_scale;
        let l = self.length;
        Ok(Kinematics {
            v1: k * profile(w) + self.dead_volume,
            v2: k * profile(u) + self.dead_volume,
            a1: -k / l * profile_slope(w),
            a2: k / l * profile_slope(u),
            da1: k / (l * l) * profile_curvature(w),
            da2: k / (l * l) * profile_curvature(u),
        })
    }
}

pub(crate) fn shape_factor(length: f64, pouches: u32, d_s: f64, d_c: f64) -> f64 {
    length * length / f64::from(pouches) * (d_c / 3.0 + d_s / 2.0)
}

fn check_angle(theta: f64) -> Result<()> {
    if (0.0..PI).contains(&theta) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            quantity: "theta",
            value: theta,
            expected: "0 <= theta < pi",
        })
    }
}

// Normalised volume g(u) = (2/3 − u/2)·sqrt(6u) with u the contraction over L0,
// and its first two derivatives.
fn profile(u: f64) -> f64 {
    (2.0 / 3.0 - 0.5 * u) * (6.0 * u).sqrt()
}

fn profile_slope(u: f64) -> f64 {
    (2.0 - 4.5 * u) / (6.0 * u).sqrt()
}

fn profile_curvature(u: f64) -> f64 {
    let s = (6.0 * u).sqrt();
    -(6.0 + 13.5 * u) / (s * s * s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    /// `Γ0`, isothermal bulk modulus [Pa].
    pub bulk_modulus: f64,
    /// `ρ` [kg/m³].
    pub density: f64,
    /// Reference for the gauge pressures [Pa]. Metadata only.
    pub atmospheric_pressure: f64,
}

impl FluidParams {
    pub fn water() -> Self {
        FluidParams {
            bulk_modulus: 2e9,
            density: 1e3,
            atmospheric_pressure: 1e5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bulk_modulus.is_finite() && self.bulk_modulus > 0.0) {
            return Err(Error::invalid("Gamma0", "must be finite and > 0"));
        }
        if !(self.density.is_finite() && self.density >= 0.0) {
            return Err(Error::invalid("rho", "must be finite and >= 0"));
        }
        if !self.atmospheric_pressure.is_finite() {
            return Err(Error::invalid("P_atm", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub geometry: ActuatorGeometry,
    pub fluid: FluidParams,
    /// `m`, payload mass [kg].
    pub payload_mass: f64,
    /// `R`, transmission damping [N·s/m].
    pub damping: f64,
}

impl PlantParams {
    /// Prototype pair: water, 250 g payload, `R = 5 N·s/m`.
    pub fn prototype() -> Self {
        PlantParams {
            geometry: ActuatorGeometry::prototype(),
            fluid: FluidParams::water(),
            payload_mass: 0.25,
            damping: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.fluid.validate()?;
        if !(self.payload_mass.is_finite() && self.payload_mass > 0.0) {
            return Err(Error::invalid("m", "must be finite and > 0"));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(Error::invalid("R", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// `M = m + ρ (V1 + V2)`.
    pub fn total_mass(&self, x: f64) -> Result<f64> {
        let (v1, v2) = self.geometry.volumes(x)?;
        Ok(self.mass_from_volumes(v1, v2))
    }

    pub(crate) fn mass_from_volumes(&self, v1: f64, v2: f64) -> f64 {
        self.payload_mass + (v1 + v2) * self.fluid.density
    }
}

/// Port-Hamiltonian state of the pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub x: f64,
    pub p: f64,
    pub p1: f64,
    pub p2: f64,
}

impl PlantState {
    pub fn new(x: f64, p: f64, p1: f64, p2: f64) -> Self {
        PlantState { x, p, p1, p2 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.p, self.p1, self.p2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        PlantState::new(a[0], a[1], a[2], a[3])
    }
}

/// Time derivative of a [`PlantState`], component by component.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantRate {
    pub x: f64,
    pub p: f64,
    pub p1: f64,
    pub p2: f64,
}

impl PlantRate {
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.p, self.p1, self.p2]
    }
}

/// `e^r − 1 − r`, accurate for small `r` where the direct form cancels.
fn exp_remainder(r: f64) -> f64 {
    if r.abs() < 0.05 {
        let mut term = 0.5 * r * r;
        let mut sum = term;
        for n in 3..=14 {
            term *= r / f64::from(n);
            sum += term;
        }
        sum
    } else {
        r.exp_m1() - r
    }
}

/// Energy density `φ(P) = −P + Γ0 (e^{P/Γ0} − 1)` per unit volume [J/m³].
pub fn energy_density(pressure: f64, fluid: &FluidParams) -> f64 {
    let g = fluid.bulk_modulus;
    g * exp_remainder(pressure / g)
}

/// `Φ = φ(P) V`, internal energy of the pressurised fluid [J].
pub fn fluid_energy(pressure: f64, volume: f64, fluid: &FluidParams) -> f64 {
    energy_density(pressure, fluid) * volume
}

/// `H = p²/(2M) + Φ1 + Φ2`.
pub fn hamiltonian(state: &PlantState, params: &PlantParams) -> Result<f64> {
    let (v1, v2) = params.geometry.volumes(state.x)?;
    let mass = params.mass_from_volumes(v1, v2);
    Ok(state.p * state.p / (2.0 * mass)
        + fluid_energy(state.p1, v1, &params.fluid)
        + fluid_energy(state.p2, v2, &params.fluid))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianGradient {
    pub dx: f64,
    pub dp: f64,
    pub dp1: f64,
    pub dp2: f64,
}

pub fn hamiltonian_gradient(state: &PlantState, params: &PlantParams) -> Result<HamiltonianGradient> {
    let k = params.geometry.kinematics(state.x)?;
    Ok(gradient_from(state, params, &k))
}

pub(crate) fn gradient_from(state: &PlantState, params: &PlantParams, k: &Kinematics) -> HamiltonianGradient {
    let fluid = &params.fluid;
    let g = fluid.bulk_modulus;
    let mass = params.mass_from_volumes(k.v1, k.v2);
    let p = state.p;
    HamiltonianGradient {
        dx: -p * p * fluid.density * (k.a1 + k.a2) / (2.0 * mass * mass)
            + energy_density(state.p1, fluid) * k.a1
            + energy_density(state.p2, fluid) * k.a2,
        dp: p / mass,
        dp1: k.v1 * (state.p1 / g).exp_m1(),
        dp2: k.v2 * (state.p2 / g).exp_m1(),
    }
}

/// Generalised force driving the momentum, excluding the external force:
/// `−∂x H − R ∂p H + Γ01 ∂P1 H + Γ02 ∂P2 H`.
pub(crate) fn internal_force(params: &PlantParams, k: &Kinematics, grad: &HamiltonianGradient) -> f64 {
    let g = params.fluid.bulk_modulus;
    let gamma1 = g * k.a1 / k.v1;
    let gamma2 = g * k.a2 / k.v2;
    -grad.dx - params.damping * grad.dp + gamma1 * grad.dp1 + gamma2 * grad.dp2
}

/// Open-loop vector field under pump flows `u1`, `u2` [m³/s] and external
/// force `force` [N].
pub fn open_loop_field(
    state: &PlantState,
    u1: f64,
    u2: f64,
    force: f64,
    params: &PlantParams,
) -> Result<PlantRate> {
    let k = params.geometry.kinematics(state.x)?;
    let grad = gradient_from(state, params, &k);
    let g = params.fluid.bulk_modulus;
    let xdot = grad.dp;
    Ok(PlantRate {
        x: xdot,
        p: internal_force(params, &k, &grad) - force,
        p1: g * (u1 - k.a1 * xdot) / k.v1,
        p2: g * (u2 - k.a2 * xdot) / k.v2,
    })
}
