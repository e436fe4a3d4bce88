//! One-parameter sweeps over a base scenario, run in parallel.

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{diagnostics, DiagnosticsSummary};
use crate::error::{Error, Result};
use crate::scenario::{self, SWEEPABLE};
use crate::simulation::{simulate, ScenarioConfig, SimulationError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// Simulation not requested.
    Skipped,
    /// The swept value makes the scenario invalid.
    Invalid,
    DomainExit,
    StepUnderflow,
}

/// One row of the sweep table. Empty cells mean "not available".
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub valid: Option<bool>,
    pub alpha_within_bound: Option<bool>,
    pub condition_product: Option<f64>,
    pub threshold: Option<f64>,
    pub margin: Option<f64>,
    pub status: RunStatus,
    pub message: String,
    pub final_x: Option<f64>,
    pub position_error: Option<f64>,
    pub final_f_tilde: Option<f64>,
    pub final_zeta: Option<f64>,
    pub max_psi_increment: Option<f64>,
    pub zeta_decay_rate: Option<f64>,
    pub settle_time: Option<f64>,
}

impl SweepRow {
    fn empty(parameter: &str, value: f64, status: RunStatus, message: String) -> Self {
        SweepRow {
            parameter: parameter.to_string(),
            value,
            valid: None,
            alpha_within_bound: None,
            condition_product: None,
            threshold: None,
            margin: None,
            status,
            message,
            final_x: None,
            position_error: None,
            final_f_tilde: None,
            final_zeta: None,
            max_psi_increment: None,
            zeta_decay_rate: None,
            settle_time: None,
        }
    }

    fn fill(&mut self, d: &DiagnosticsSummary) {
        self.final_x = Some(d.final_x);
        self.position_error = Some(d.position_error);
        self.final_f_tilde = Some(d.final_f_tilde);
        self.final_zeta = Some(d.final_zeta);
        self.max_psi_increment = Some(d.max_psi_increment);
        self.zeta_decay_rate = d.zeta_decay_rate;
        self.settle_time = d.settle_time;
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn run_one(base: &ScenarioConfig, parameter: &str, value: f64, run: bool) -> SweepRow {
    let mut sc = base.clone();
    if let Err(e) = scenario::set_param(&mut sc, parameter, value) {
        return SweepRow::empty(parameter, value, RunStatus::Invalid, e.to_string());
    }
    if let Err(e) = sc.validate() {
        return SweepRow::empty(parameter, value, RunStatus::Invalid, e.to_string());
    }
    let mut row = SweepRow::empty(parameter, value, RunStatus::Skipped, String::new());
    match sc.stability() {
        Ok(report) => {
            row.valid = Some(report.positive_definite);
            row.alpha_within_bound = Some(report.alpha_within_bound);
            row.condition_product = Some(report.condition_product);
            row.threshold = Some(report.threshold);
            row.margin = Some(report.margin);
        }
        Err(e) => {
            row.status = RunStatus::Invalid;
            row.message = e.to_string();
            return row;
        }
    }
    if !run {
        return row;
    }
    match simulate(&sc) {
        Ok(out) => match diagnostics(&out.record, &sc.gains, &sc.params) {
            Ok(d) => {
                row.status = RunStatus::Ok;
                row.fill(&d);
            }
            Err(e) => row.message = e.to_string(),
        },
        Err(e) => {
            row.status = match e {
                SimulationError::Invalid(_) => RunStatus::Invalid,
                SimulationError::DomainExit { .. } => RunStatus::DomainExit,
                SimulationError::StepUnderflow { .. } => RunStatus::StepUnderflow,
            };
            row.message = e.to_string();
            if let Some(partial) = e.partial().filter(|p| !p.is_empty()) {
                if let Ok(d) = diagnostics(partial, &sc.gains, &sc.params) {
                    row.fill(&d);
                }
            }
        }
    }
    row
}

/// Sets `parameter` to each value in turn and reports gain validity and,
/// when `run` is set, the diagnostics of the simulated scenario.
pub fn sweep(base: &ScenarioConfig, parameter: &str, values: &[f64], run: bool) -> Result<Vec<SweepRow>> {
    if !SWEEPABLE.contains(&parameter) {
        return Err(Error::UnknownParameter(parameter.to_string()));
    }
    Ok(values.par_iter().map(|&v| run_one(base, parameter, v, run)).collect())
}
