//! Post-run checks of a recorded trajectory against the stability theory.

use serde::Serialize;

use crate::controller::ControllerGains;
use crate::error::{Error, Result};
use crate::plant::PlantParams;
use crate::simulation::TrajectoryRecord;

/// Samples with `|ζ|` at or below this are ignored by the decay fit [N].
pub const ZETA_FIT_FLOOR: f64 = 1e-9;

/// Half-width of the settle band as a fraction of the last setpoint step.
pub const SETTLE_BAND: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsSummary {
    pub samples: usize,
    pub final_time: f64,
    pub final_x: f64,
    pub x_star: f64,
    /// `x − x*` at the last sample [m].
    pub position_error: f64,
    /// `ς` at the last sample [N].
    pub final_sigma: f64,
    /// `P1 A1 + P2 A2 − F̂` at the last sample [N].
    pub pressure_balance: f64,
    pub final_f_hat: f64,
    pub final_f_tilde: f64,
    pub final_f_true: f64,
    pub final_zeta: f64,
    pub max_psi: f64,
    /// Largest increase of `Ψ` between consecutive samples (0 if none) [J].
    pub max_psi_increment: f64,
    /// Least-squares decay rate of `|ζ|` [1/s], when enough samples exist.
    pub zeta_decay_rate: Option<f64>,
    pub alpha: f64,
    pub zeta_decay_rel_error: Option<f64>,
    /// Time after which `x` stays within the settle band of the last setpoint.
    pub settle_time: Option<f64>,
    /// Sign changes of `A1 + A2` along the trajectory.
    pub symmetric_crossings: usize,
    /// Whether some sample sits on `A1 = −A2` (relative 1e-9).
    pub touches_symmetric: bool,
}

pub fn diagnostics(record: &TrajectoryRecord, gains: &ControllerGains, params: &PlantParams) -> Result<DiagnosticsSummary> {
    let last = record.last().ok_or(Error::EmptyTrajectory)?;
    let geometry = &params.geometry;

    let (a1, a2) = geometry.volume_gradients(last.x)?;
    let pressure_balance = last.p1 * a1 + last.p2 * a2 - last.f_hat;

    let max_psi = record.iter().map(|s| s.psi).fold(0.0, f64::max);
    let max_psi_increment = record
        .samples
        .windows(2)
        .map(|w| w[1].psi - w[0].psi)
        .fold(0.0, f64::max);

    let zeta_decay_rate = fit_decay_rate(record);

    let mut symmetric_crossings = 0;
    let mut touches_symmetric = false;
    let mut previous: Option<f64> = None;
    for s in record.iter() {
        let (a1, a2) = geometry.volume_gradients(s.x)?;
        let sum = a1 + a2;
        if sum.abs() <= 1e-9 * a2.abs() {
            touches_symmetric = true;
        }
        if let Some(prev) = previous {
            if prev * sum < 0.0 {
                symmetric_crossings += 1;
            }
        }
        if sum != 0.0 {
            previous = Some(sum);
        }
    }

    Ok(DiagnosticsSummary {
        samples: record.len(),
        final_time: last.t,
        final_x: last.x,
        x_star: last.x_star,
        position_error: last.x - last.x_star,
        final_sigma: last.sigma,
        pressure_balance,
        final_f_hat: last.f_hat,
        final_f_tilde: last.f_tilde,
        final_f_true: last.f_true,
        final_zeta: last.zeta,
        max_psi,
        max_psi_increment,
        zeta_decay_rate,
        alpha: gains.alpha,
        zeta_decay_rel_error: zeta_decay_rate.map(|r| (r - gains.alpha).abs() / gains.alpha),
        settle_time: settle_time(record),
        symmetric_crossings,
        touches_symmetric,
    })
}

fn fit_decay_rate(record: &TrajectoryRecord) -> Option<f64> {
    let points: Vec<(f64, f64)> = record
        .iter()
        .filter(|s| s.zeta.abs() > ZETA_FIT_FLOOR)
        .map(|s| (s.t, s.zeta.abs().ln()))
        .collect();
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_l = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, l) in &points {
        sxy += (t - mean_t) * (l - mean_l);
        sxx += (t - mean_t) * (t - mean_t);
    }
    (sxx > 0.0).then(|| -sxy / sxx)
}

fn settle_time(record: &TrajectoryRecord) -> Option<f64> {
    let last = record.last()?;
    let target = last.x_star;
    // Only the segment after the last setpoint switch counts.
    let start = record.samples.iter().rposition(|s| s.x_star != target).map_or(0, |i| i + 1);
    let segment = &record.samples[start..];
    let reference = if start == 0 { segment[0].x } else { record.samples[start - 1].x };
    let band = (SETTLE_BAND * (target - reference).abs()).max(1e-12);
    match segment.iter().rposition(|s| (s.x - target).abs() > band) {
        None => Some(segment[0].t),
        Some(i) if i + 1 < segment.len() => Some(segment[i + 1].t),
        Some(_) => None,
    }
}
