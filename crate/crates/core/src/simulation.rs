//! Closed-loop simulation of plant, observer and controller.
//!
//! The integrated state is `(x, p, P1, P2, F̂)`. Pressure rows use the form
//! in which the bulk modulus has cancelled ([`controller::pressure_rates`]);
//! the raw flow-based form would carry rates of order `Γ0/V ≈ 1e15 s⁻¹`.

use serde::{Deserialize, Serialize};

use crate::controller::{self, ControllerGains, Setpoint};
use crate::error::{Error, Result};
use crate::observer::{force_estimate, ObserverState};
use crate::plant::{gradient_from, hamiltonian, internal_force, PlantParams, PlantState};
use crate::solver::{AnyIntegrator, Integrator, Method, Rk23, Rk4, SolveError};
use crate::stability::{validate_gains, StabilityReport};

/// External force acting on the payload.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForceModel {
    /// `F0` [N].
    Constant(f64),
    /// `c · tanh(ẋ)` [N].
    TanhFriction(f64),
    /// `k · x` [N].
    Spring(f64),
}

impl ForceModel {
    pub fn evaluate(&self, state: &PlantState, params: &PlantParams) -> Result<f64> {
        match *self {
            ForceModel::TanhFriction(c) => Ok(c * (state.p / params.total_mass(state.x)?).tanh()),
            _ => Ok(self.evaluate_with_mass(state, f64::NAN)),
        }
    }

    fn evaluate_with_mass(&self, state: &PlantState, mass: f64) -> f64 {
        match *self {
            ForceModel::Constant(f0) => f0,
            ForceModel::TanhFriction(c) => c * (state.p / mass).tanh(),
            ForceModel::Spring(k) => k * state.x,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ForceModel::Constant(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Step of the fixed-step method [s].
    pub fixed_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Rk23,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 1e-2,
            fixed_step: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("fixed_step", self.fixed_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn integrator(&self) -> AnyIntegrator {
        match self.method {
            Method::Rk23 => AnyIntegrator::Rk23(Rk23::new(self.rel_tol, self.abs_tol, self.max_step)),
            Method::Rk4 => AnyIntegrator::Rk4(Rk4::new(self.fixed_step)),
        }
    }
}

/// Initial condition in measurable terms (velocity rather than momentum).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InitialCondition {
    pub x: f64,
    pub xdot: f64,
    pub p1: f64,
    pub p2: f64,
    /// `None` starts the observer unbiased (`F̂ = α p0`).
    pub f_hat: Option<f64>,
}

/// Setpoint switch at `time`; the first entry starts at `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetpointChange {
    pub time: f64,
    pub x_star: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub params: PlantParams,
    pub gains: ControllerGains,
    /// Assumed bound on the force variation, used only for the report [N·s/m].
    pub epsilon: f64,
    pub schedule: Vec<SetpointChange>,
    pub initial: InitialCondition,
    pub force: ForceModel,
    pub duration: f64,
    pub solver: SolverConfig,
    /// Output cadence [s].
    pub output_dt: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.gains.validate()?;
        self.solver.validate()?;
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::invalid("epsilon", "must be finite and >= 0"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid("duration", "must be finite and > 0"));
        }
        if !(self.output_dt.is_finite() && self.output_dt > 0.0) {
            return Err(Error::invalid("output_dt", "must be finite and > 0"));
        }
        match self.schedule.first() {
            Some(first) if first.time == 0.0 => {}
            _ => return Err(Error::invalid("schedule", "must start with a setpoint at t = 0")),
        }
        for pair in self.schedule.windows(2) {
            if !(pair[1].time > pair[0].time) {
                return Err(Error::invalid("schedule", "setpoint times must be strictly increasing"));
            }
        }
        for change in &self.schedule {
            Setpoint::new(change.x_star, &self.params.geometry)?;
        }
        if !self.params.geometry.contains(self.initial.x) {
            return Err(Error::invalid("x", "initial position is outside the admissible range"));
        }
        Ok(())
    }

    /// Setpoint active at time `t`.
    pub fn setpoint_at(&self, t: f64) -> f64 {
        self.schedule
            .iter()
            .take_while(|c| c.time <= t)
            .last()
            .unwrap_or(&self.schedule[0])
            .x_star
    }

    pub fn initial_state(&self) -> Result<(PlantState, f64)> {
        let ic = &self.initial;
        let mass = self.params.total_mass(ic.x)?;
        let state = PlantState::new(ic.x, mass * ic.xdot, ic.p1, ic.p2);
        let f_hat = ic.f_hat.unwrap_or(self.gains.alpha * state.p);
        Ok((state, f_hat))
    }

    /// Gain report at the domain midpoint.
    pub fn stability(&self) -> Result<StabilityReport> {
        let mass = self.params.total_mass(self.params.geometry.midpoint())?;
        Ok(validate_gains(&self.params, &self.gains, mass, self.epsilon))
    }
}

/// One recorded sample. Field names double as CSV column names.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub xdot: f64,
    pub p: f64,
    #[serde(rename = "P1")]
    pub p1: f64,
    #[serde(rename = "P2")]
    pub p2: f64,
    #[serde(rename = "U1")]
    pub u1: f64,
    #[serde(rename = "U2")]
    pub u2: f64,
    #[serde(rename = "F_hat")]
    pub f_hat: f64,
    #[serde(rename = "F_tilde")]
    pub f_tilde: f64,
    #[serde(rename = "F_true")]
    pub f_true: f64,
    pub zeta: f64,
    pub sigma: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "H_d")]
    pub h_d: f64,
    #[serde(rename = "Psi")]
    pub psi: f64,
    pub x_star: f64,
}

impl TrajectorySample {
    pub fn plant_state(&self) -> PlantState {
        PlantState::new(self.x, self.p, self.p1, self.p2)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub samples: Vec<TrajectorySample>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TrajectorySample> {
        self.samples.iter()
    }

    /// Linear interpolation of `x` at time `t`.
    pub fn position_at(&self, t: f64) -> Option<f64> {
        let i = self.samples.partition_point(|s| s.t < t);
        let hi = self.samples.get(i)?;
        if i == 0 || hi.t == t {
            return Some(hi.x);
        }
        let lo = &self.samples[i - 1];
        Some(lo.x + (hi.x - lo.x) * (t - lo.t) / (hi.t - lo.t))
    }
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub record: TrajectoryRecord,
    /// Gain report for the scenario, attached whether or not it passes.
    pub stability: StabilityReport,
}

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid scenario: {0}")]
    Invalid(#[from] Error),

    #[error("state left the admissible region near t = {t} s: {source}")]
    DomainExit {
        t: f64,
        state: [f64; 5],
        source: Error,
        partial: TrajectoryRecord,
    },

    #[error("step size underflow at t = {t} s (h = {h:e}), state {state:?}")]
    StepUnderflow {
        t: f64,
        h: f64,
        state: [f64; 5],
        partial: TrajectoryRecord,
    },
}

impl SimulationError {
    pub fn partial(&self) -> Option<&TrajectoryRecord> {
        match self {
            SimulationError::Invalid(_) => None,
            SimulationError::DomainExit { partial, .. } | SimulationError::StepUnderflow { partial, .. } => Some(partial),
        }
    }
}

struct LoopContext<'a> {
    params: &'a PlantParams,
    gains: &'a ControllerGains,
    force: ForceModel,
}

impl LoopContext<'_> {
    fn rate(&self, y: &[f64; 5], setpoint: &Setpoint) -> Result<[f64; 5]> {
        let state = PlantState::new(y[0], y[1], y[2], y[3]);
        let alpha = self.gains.alpha;
        let obs = ObserverState { f_hat: y[4], alpha };
        let k = self.params.geometry.kinematics(state.x)?;
        let grad = gradient_from(&state, self.params, &k);
        let mass = self.params.mass_from_volumes(k.v1, k.v2);
        let drive = internal_force(self.params, &k, &grad);
        let force = self.force.evaluate_with_mass(&state, mass);
        let (r1, r2) = controller::pressure_rates(&state, &obs, self.gains, setpoint, self.params)?;
        Ok([grad.dp, drive - force, r1, r2, alpha * (drive - y[4] + alpha * state.p)])
    }

    fn sample(&self, t: f64, y: &[f64; 5], setpoint: &Setpoint) -> Result<TrajectorySample> {
        let state = PlantState::new(y[0], y[1], y[2], y[3]);
        let obs = ObserverState {
            f_hat: y[4],
            alpha: self.gains.alpha,
        };
        let mass = self.params.total_mass(state.x)?;
        let f_true = self.force.evaluate_with_mass(&state, mass);
        let (u1, u2) = controller::control_flows(&state, &obs, self.gains, setpoint, self.params)?;
        let energy = controller::desired_energy(&state, &obs, f_true, self.gains, setpoint, self.params)?;
        Ok(TrajectorySample {
            t,
            x: state.x,
            xdot: state.p / mass,
            p: state.p,
            p1: state.p1,
            p2: state.p2,
            u1,
            u2,
            f_hat: obs.f_hat,
            f_tilde: force_estimate(&obs, state.p).f_tilde,
            f_true,
            zeta: energy.zeta,
            sigma: energy.sigma,
            h: hamiltonian(&state, self.params)?,
            h_d: energy.h_d,
            psi: energy.psi,
            x_star: setpoint.x_star(),
        })
    }
}

/// Event times: the output grid plus every setpoint switch, sorted.
fn event_times(duration: f64, output_dt: f64, schedule: &[SetpointChange]) -> Vec<(f64, bool)> {
    let n = (duration / output_dt * (1.0 + 1e-12)).floor() as usize;
    let mut times: Vec<(f64, bool)> = (0..=n).map(|i| (i as f64 * output_dt, true)).collect();
    if times.last().is_none_or(|&(t, _)| duration - t > 1e-9 * output_dt) {
        times.push((duration, true));
    }
    for c in schedule.iter().skip(1).filter(|c| c.time < duration) {
        if !times.iter().any(|&(t, _)| (t - c.time).abs() <= 1e-12 * duration) {
            times.push((c.time, false));
        }
    }
    times.sort_by(|a, b| a.0.total_cmp(&b.0));
    times
}

/// Integrates the closed loop and records every channel on the output grid.
#[allow(clippy::result_large_err)]
pub fn simulate(scenario: &ScenarioConfig) -> Result<SimulationOutput, SimulationError> {
    scenario.validate()?;
    let stability = scenario.stability()?;
    let params = &scenario.params;
    let ctx = LoopContext {
        params,
        gains: &scenario.gains,
        force: scenario.force,
    };
    let (state, f_hat) = scenario.initial_state()?;
    let mut y = [state.x, state.p, state.p1, state.p2, f_hat];
    let mut integrator = scenario.solver.integrator();
    let mut record = TrajectoryRecord::default();

    let events = event_times(scenario.duration, scenario.output_dt, &scenario.schedule);
    let mut t = 0.0;
    for (t_next, is_output) in events {
        let setpoint = Setpoint::new(scenario.setpoint_at(t), &params.geometry)?;
        if t_next > t {
            let mut f = |_t: f64, y: &[f64; 5]| ctx.rate(y, &setpoint);
            y = integrator.advance(&mut f, t, y, t_next).map_err(|e| match e {
                SolveError::Rhs { t, y, source } => SimulationError::DomainExit {
                    t,
                    state: y,
                    source,
                    partial: std::mem::take(&mut record),
                },
                SolveError::StepUnderflow { t, h, y } => SimulationError::StepUnderflow {
                    t,
                    h,
                    state: y,
                    partial: std::mem::take(&mut record),
                },
            })?;
            t = t_next;
        }
        if is_output {
            let setpoint = Setpoint::new(scenario.setpoint_at(t), &params.geometry)?;
            let sample = ctx.sample(t, &y, &setpoint).map_err(|source| SimulationError::DomainExit {
                t,
                state: y,
                source,
                partial: std::mem::take(&mut record),
            })?;
            record.samples.push(sample);
        }
    }
    Ok(SimulationOutput { record, stability })
}

/// Open-loop integration under constant flows, returning `(t, state)` on
/// the output grid. Used for conservation checks of the plant model.
#[allow(clippy::result_large_err)]
pub fn simulate_open_loop(
    params: &PlantParams,
    initial: PlantState,
    flows: (f64, f64),
    force: ForceModel,
    duration: f64,
    output_dt: f64,
    solver: &SolverConfig,
) -> Result<Vec<(f64, PlantState)>, SimulationError> {
    params.validate()?;
    solver.validate()?;
    let mut integrator = solver.integrator();
    let mut f = |_t: f64, y: &[f64; 4]| -> Result<[f64; 4]> {
        let state = PlantState::from_array(*y);
        let applied = force.evaluate(&state, params)?;
        Ok(crate::plant::open_loop_field(&state, flows.0, flows.1, applied, params)?.to_array())
    };
    let mut out = vec![(0.0, initial)];
    let mut y = initial.to_array();
    let mut t = 0.0;
    for (t_next, _) in event_times(duration, output_dt, &[]).into_iter().skip(1) {
        y = integrator.advance(&mut f, t, y, t_next).map_err(|e| match e {
            SolveError::Rhs { t, y, source } => SimulationError::DomainExit {
                t,
                state: [y[0], y[1], y[2], y[3], 0.0],
                source,
                partial: TrajectoryRecord::default(),
            },
            SolveError::StepUnderflow { t, h, y } => SimulationError::StepUnderflow {
                t,
                h,
                state: [y[0], y[1], y[2], y[3], 0.0],
                partial: TrajectoryRecord::default(),
            },
        })?;
        t = t_next;
        out.push((t, PlantState::from_array(y)));
    }
    Ok(out)
}
