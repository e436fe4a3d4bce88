//! Immersion-and-invariance estimator for a constant external force.
//!
//! The estimate is `F̃ = F̂ + β` with `β = −α p`. The integrator state `F̂`
//! evolves so that the error `ζ = F̃ − F` obeys `ζ̇ = −α ζ` whenever the
//! force is constant. Only measurable quantities enter the update.

use crate::error::{Error, Result};
use crate::plant::{gradient_from, internal_force, PlantParams, PlantState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverState {
    /// `F̂` [N].
    pub f_hat: f64,
    /// `α` [1/s].
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceEstimate {
    /// `F̃ = F̂ + β` [N].
    pub f_tilde: f64,
    /// `β = −α p` [N].
    pub beta: f64,
}

impl ObserverState {
    pub fn new(f_hat: f64, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("alpha", "observer gain must be finite and > 0"));
        }
        Ok(ObserverState { f_hat, alpha })
    }

    /// Starts with `F̂ = α p0`, so that the initial estimate is zero.
    pub fn unbiased(alpha: f64, p0: f64) -> Result<Self> {
        Self::new(alpha * p0, alpha)
    }
}

pub fn force_estimate(obs: &ObserverState, p: f64) -> ForceEstimate {
    let beta = -obs.alpha * p;
    ForceEstimate {
        f_tilde: obs.f_hat + beta,
        beta,
    }
}

/// `dF̂/dt = α (−∂x H − R ∂p H + Γ01 ∂P1 H + Γ02 ∂P2 H − F̂ − β)`.
pub fn observer_rate(state: &PlantState, obs: &ObserverState, params: &PlantParams) -> Result<f64> {
    let k = params.geometry.kinematics(state.x)?;
    let grad = gradient_from(state, params, &k);
    let beta = -obs.alpha * state.p;
    Ok(obs.alpha * (internal_force(params, &k, &grad) - obs.f_hat - beta))
}
