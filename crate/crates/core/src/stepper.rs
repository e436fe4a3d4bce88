//! Conversion of pump flow commands into stepper-motor targets.
//!
//! A syringe of cross-section `S` driven along a minimum-jerk profile of
//! duration `T_f` delivers `U = S ẋ_s`. Solving the profile velocity for the
//! end point gives the target that realises flow `U` at time `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepperParams {
    /// Syringe cross-section area [m²].
    pub area: f64,
    /// Sampling interval [s].
    pub delta_t: f64,
    /// Profile duration [s].
    pub duration: f64,
    /// Empirical flow-to-position scale for the raw mapping.
    pub k_u: f64,
}

impl StepperParams {
    pub fn new(area: f64, delta_t: f64, duration: f64, k_u: f64) -> Result<Self> {
        let s = StepperParams {
            area,
            delta_t,
            duration,
            k_u,
        };
        s.validate()?;
        Ok(s)
    }

    /// Round syringe of inner diameter `diameter`, profile over two samples.
    pub fn syringe(diameter: f64, delta_t: f64, k_u: f64) -> Result<Self> {
        let r = 0.5 * diameter;
        Self::new(std::f64::consts::PI * r * r, delta_t, 2.0 * delta_t, k_u)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0 && self.area.is_finite()) {
            return Err(Error::invalid("S", "syringe area must be > 0"));
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(Error::invalid("delta_t", "sampling interval must be > 0"));
        }
        if !(self.duration >= self.delta_t) {
            return Err(Error::invalid("T_f", "profile duration must be at least one sample"));
        }
        Ok(())
    }
}

fn check_time(t: f64, duration: f64, closed: bool) -> Result<()> {
    let ok = if closed {
        t >= 0.0 && t <= duration
    } else {
        t > 0.0 && t < duration
    };
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            quantity: "t",
            value: t,
            expected: if closed { "0 <= t <= T_f" } else { "0 < t < T_f" },
        })
    }
}

/// Quintic minimum-jerk position, `x_s0 + Δ (10τ³ − 15τ⁴ + 6τ⁵)`.
pub fn min_jerk_position(t: f64, duration: f64, start: f64, end: f64) -> Result<f64> {
    check_time(t, duration, true)?;
    let tau = t / duration;
    let shape = tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
    Ok(start + (end - start) * shape)
}

/// Velocity of the quintic profile, `Δ · 30 t² (T_f − t)² / T_f⁵`.
pub fn min_jerk_velocity(t: f64, duration: f64, start: f64, end: f64) -> Result<f64> {
    check_time(t, duration, true)?;
    let rest = duration - t;
    Ok((end - start) * 30.0 * t * t * rest * rest / duration.powi(5))
}

/// Stepper end point that produces flow `flow` at time `t` of the profile:
/// `x_s0 + U T_f⁵ / (30 t² S (T_f − t)²)`.
pub fn stepper_target(flow: f64, stepper: &StepperParams, start: f64, t: f64) -> Result<f64> {
    let tf = stepper.duration;
    check_time(t, tf, false)?;
    let rest = tf - t;
    Ok(start + flow * tf.powi(5) / (30.0 * t * t * stepper.area * rest * rest))
}

/// Sampled special case `t = Δt`, `T_f = 2Δt`: `x_s0 + 32 U Δt / (30 S)`.
pub fn stepper_target_two_sample(flow: f64, area: f64, delta_t: f64, start: f64) -> f64 {
    start + 32.0 * flow * delta_t / (30.0 * area)
}

/// Empirical linear mapping `x_s0 + U k_U`.
pub fn stepper_target_scaled(flow: f64, stepper: &StepperParams, start: f64) -> f64 {
    start + flow * stepper.k_u
}
